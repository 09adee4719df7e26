//! Triangular lattice geometry and polarization bases.
//!
//! Lengths are in units of a, momenta in 1/a.
//!
//! Valley labels: `K` sits at (4π/3a)(cos 30°, sin 30°) and `K'` at
//! (4π/3a)(0, 1). They are adjacent corners of the hexagonal zone, hence
//! inequivalent; with this labelling the winding phases of the real-space
//! Green's function and the momentum-space model carry the same signs.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::linalg::{adjoint2, mul2, Mat2};

pub type Vec2 = [f64; 2];

pub fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Valley {
    K,
    KPrime,
}

impl Valley {
    pub const BOTH: [Valley; 2] = [Valley::K, Valley::KPrime];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeGeometry {
    pub r1: Vec2,
    pub r2: Vec2,
    pub g1: Vec2,
    pub g2: Vec2,
    pub pk: Vec2,
    pub pk_prime: Vec2,
    /// omega_A / c in units of 1/a.
    pub light_cone_radius: f64,
}

impl LatticeGeometry {
    /// Geometry for a lattice with a = 1 and the given vacuum wavelength (in a).
    pub fn new(wavelength: f64) -> Self {
        let s3 = 3f64.sqrt();
        let kk = 4.0 * PI / 3.0;
        Self {
            r1: [s3 / 2.0, 0.5],
            r2: [s3 / 2.0, -0.5],
            g1: [2.0 * PI / s3, 2.0 * PI],
            g2: [2.0 * PI / s3, -2.0 * PI],
            pk: [kk * s3 / 2.0, kk / 2.0],
            pk_prime: [0.0, kk],
            light_cone_radius: 2.0 * PI / wavelength,
        }
    }

    pub fn valley(&self, v: Valley) -> Vec2 {
        match v {
            Valley::K => self.pk,
            Valley::KPrime => self.pk_prime,
        }
    }

    pub fn site(&self, n1: i64, n2: i64) -> Vec2 {
        add(scale(self.r1, n1 as f64), scale(self.r2, n2 as f64))
    }

    /// Fractional reciprocal coordinates: k = f1 G1 + f2 G2.
    pub fn reciprocal_coords(&self, k: Vec2) -> Vec2 {
        [dot(k, self.r1) / (2.0 * PI), dot(k, self.r2) / (2.0 * PI)]
    }

    /// Shortest representative of `q` modulo the reciprocal lattice.
    pub fn min_image(&self, q: Vec2) -> Vec2 {
        let f = self.reciprocal_coords(q);
        let (b1, b2) = (f[0].round(), f[1].round());
        let mut best = q;
        let mut best_n = f64::INFINITY;
        for d1 in -1..=1 {
            for d2 in -1..=1 {
                let n1 = b1 + d1 as f64;
                let n2 = b2 + d2 as f64;
                let c = [q[0] - n1 * self.g1[0] - n2 * self.g2[0], q[1] - n1 * self.g1[1] - n2 * self.g2[1]];
                let n = dot(c, c);
                if n < best_n - 1e-14 {
                    best_n = n;
                    best = c;
                }
            }
        }
        best
    }
}

pub fn lattice_vectors(params: &crate::units::PhysicalParams) -> LatticeGeometry {
    LatticeGeometry::new(params.scaled().wavelength)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    /// (σ+, σ−) with σ± = ∓(x ± i y)/√2.
    Circular,
    /// (x, y).
    Cartesian,
}

impl std::str::FromStr for Basis {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "circular" => Ok(Basis::Circular),
            "cartesian" => Ok(Basis::Cartesian),
            other => Err(crate::error::Error::Config(format!("unknown basis tag `{other}`"))),
        }
    }
}

/// Columns are the circular states in Cartesian components.
pub fn circular_to_cartesian_unitary() -> Mat2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [[C64::new(-s, 0.0), C64::new(s, 0.0)], [C64::new(0.0, -s), C64::new(0.0, -s)]]
}

/// A 2x2 dipole-coupling block with its basis tag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreensMatrix {
    pub m: Mat2,
    pub basis: Basis,
}

impl GreensMatrix {
    pub fn new(m: Mat2, basis: Basis) -> Self {
        Self { m, basis }
    }

    pub fn to_basis(&self, target: Basis) -> Self {
        basis_transform(self, target)
    }
}

pub fn basis_transform(g: &GreensMatrix, target: Basis) -> GreensMatrix {
    let u = circular_to_cartesian_unitary();
    let m = match (g.basis, target) {
        (a, b) if a == b => g.m,
        (Basis::Cartesian, Basis::Circular) => mul2(&mul2(&adjoint2(&u), &g.m), &u),
        (Basis::Circular, Basis::Cartesian) => mul2(&mul2(&u, &g.m), &adjoint2(&u)),
        _ => unreachable!(),
    };
    GreensMatrix { m, basis: target }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dist2, identity2};
    use proptest::prelude::*;

    #[test]
    fn duality() {
        let g = LatticeGeometry::new(3.0);
        for (i, r) in [g.r1, g.r2].iter().enumerate() {
            for (j, k) in [g.g1, g.g2].iter().enumerate() {
                let want = if i == j { 2.0 * PI } else { 0.0 };
                assert!((dot(*r, *k) - want).abs() < 1e-12 * 2.0 * PI);
            }
        }
        assert!((norm(g.pk) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((norm(g.pk_prime) - 4.0 * PI / 3.0).abs() < 1e-14);
        assert!((g.light_cone_radius / norm(g.pk) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn valleys_inequivalent_and_minus_k_is_k_prime() {
        let g = LatticeGeometry::new(3.0);
        let d = g.min_image(sub(g.pk, g.pk_prime));
        assert!(norm(d) > 1.0);
        let m = g.min_image(add(g.pk, g.pk_prime));
        assert!(norm(m) < 1e-12, "-K must be equivalent to K'");
    }

    #[test]
    fn circular_diag_maps_to_antisymmetric_imaginary() {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let g = GreensMatrix::new([[one, zero], [zero, -one]], Basis::Circular);
        let c = g.to_basis(Basis::Cartesian).m;
        // hand evaluation of U diag(1,-1) U^dagger
        let want = [[zero, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), zero]];
        assert!(dist2(&c, &want) < 1e-15);
        let id = GreensMatrix::new(identity2(), Basis::Circular).to_basis(Basis::Cartesian);
        assert!(dist2(&id.m, &identity2()) < 1e-15);
        assert!("polar".parse::<Basis>().is_err());
    }

    proptest! {
        #[test]
        fn basis_round_trip(v in proptest::collection::vec(-10.0f64..10.0, 8)) {
            let m = [[C64::new(v[0], v[1]), C64::new(v[2], v[3])], [C64::new(v[4], v[5]), C64::new(v[6], v[7])]];
            let g = GreensMatrix::new(m, Basis::Cartesian);
            let back = g.to_basis(Basis::Circular).to_basis(Basis::Cartesian);
            prop_assert!(dist2(&back.m, &m) < 1e-14 * (1.0 + crate::linalg::norm2(&m)));
        }

        #[test]
        fn min_image_is_shortest(x in -30.0f64..30.0, y in -30.0f64..30.0) {
            let g = LatticeGeometry::new(3.0);
            let q = g.min_image([x, y]);
            for n1 in -2i32..=2 {
                for n2 in -2i32..=2 {
                    let c = [q[0] + n1 as f64 * g.g1[0] + n2 as f64 * g.g2[0], q[1] + n1 as f64 * g.g1[1] + n2 as f64 * g.g2[1]];
                    prop_assert!(norm(q) <= norm(c) + 1e-9);
                }
            }
        }
    }
}
