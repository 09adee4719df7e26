//! Berry flux and Chern numbers from link variables on a graded BZ grid.
//!
//! Convention: A = i<u|∇u>, Ω = ∇×A, C = (1/2π) ∫ Ω. A plaquette carries
//! Ω·area = -arg(U₁₂ U₂₃ U₃₄ U₄₁) for a counter-clockwise loop of
//! normalised right eigenvectors.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::{BandContext, BandLabel, BandWindows, BzGrid, GridSpec, KSample};
use crate::env::PhotonicEnv;
use crate::error::{Error, Result};
use crate::lattice::{norm, sub, LatticeGeometry, Valley, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernSpec {
    pub grid: GridSpec,
    /// Refine plaquettes whose flux magnitude exceeds this.
    pub flux_limit: f64,
    /// Refine plaquettes with a link modulus below this.
    pub link_floor: f64,
    pub max_passes: usize,
}

impl ChernSpec {
    pub fn new(n: usize) -> Self {
        Self { grid: GridSpec::new(n), flux_limit: std::f64::consts::PI / 3.0, link_floor: 1e-8, max_passes: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plaquette {
    pub center: Vec2,
    pub area: f64,
    /// Berry flux (Ω·area) for lower, middle, upper.
    pub flux: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BerryGrid {
    pub grid: BzGrid,
    pub plaquettes: Vec<Plaquette>,
    /// Total flux / 2π per band before rounding.
    pub raw: [f64; 3],
    pub chern: [i32; 3],
    pub windows: BandWindows,
    pub passes: usize,
}

impl BerryGrid {
    pub fn chern_sum(&self) -> i32 {
        self.chern.iter().sum()
    }

    /// Fraction of the band's |flux| within `radius` of either valley.
    pub fn concentration(&self, band: BandLabel, geom: &LatticeGeometry, radius: f64) -> f64 {
        let b = band.index();
        let mut inside = 0.0;
        let mut total = 0.0;
        for p in &self.plaquettes {
            let f = p.flux[b].abs();
            total += f;
            if Valley::BOTH.iter().any(|&v| norm(geom.min_image(sub(p.center, geom.valley(v)))) < radius) {
                inside += f;
            }
        }
        if total > 0.0 {
            inside / total
        } else {
            0.0
        }
    }
}

/// Gauge hook for tests: a phase applied to every eigenvector at node (i, j).
pub type GaugeFn = dyn Fn(usize, usize) -> f64 + Sync;

fn link(a: &[C64; 2], b: &[C64; 2]) -> C64 {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

struct Node {
    middle: [C64; 2],
    other: [C64; 2],
}

fn node_from(s: &KSample, phase: f64) -> Result<Node> {
    if s.ambiguous {
        return Err(Error::Domain("band gap closed: degenerate eigenvalues on the grid".into()));
    }
    let (_, m) = s.of(BandLabel::Middle).ok_or_else(|| Error::Domain("sample has no middle band".into()))?;
    let o = if s.labels[0] == BandLabel::Middle { s.vectors[1] } else { s.vectors[0] };
    let ph = C64::from_polar(1.0, phase);
    Ok(Node { middle: [m[0] * ph, m[1] * ph], other: [o[0] * ph, o[1] * ph] })
}

/// Curvature on the graded grid with automatic refinement.
pub fn berry_map(spec: &ChernSpec, ctx: &BandContext) -> Result<BerryGrid> {
    berry_map_gauged(spec, ctx, None)
}

pub fn berry_map_gauged(spec: &ChernSpec, ctx: &BandContext, gauge: Option<&GaugeFn>) -> Result<BerryGrid> {
    let model = match &ctx.env {
        PhotonicEnv::Cone(m) => *m,
        PhotonicEnv::Tabulated { .. } => {
            return Err(Error::Domain("Chern numbers need the analytic cone environment on a full-zone grid".into()))
        }
    };
    if ctx.mu_b == 0.0 {
        return Err(Error::Domain("band gap closed at zero field; Chern numbers undefined".into()));
    }
    let geom = model.geometry;
    let mut grid = BzGrid::graded(&spec.grid, model.ring_radius(), &geom)?;
    // counter-clockwise loops in k-space
    let ccw = geom.g1[0] * geom.g2[1] - geom.g1[1] * geom.g2[0] > 0.0;
    let mut passes = 0;
    loop {
        let (n1, n2) = (grid.u1.len(), grid.u2.len());
        let samples: Vec<KSample> = (0..n1 * n2)
            .into_par_iter()
            .map(|idx| ctx.sample(grid.k(&geom, idx / n2, idx % n2)))
            .collect::<Result<_>>()?;
        let windows = BandWindows::from_samples(&samples)?;
        if !windows.is_open() {
            return Err(Error::Domain(format!(
                "band gap closed (lower gap {:.4e}, upper gap {:.4e}); refusing to assign Chern numbers",
                windows.gap_lower(),
                windows.gap_upper()
            )));
        }
        let nodes: Vec<Node> = samples
            .iter()
            .enumerate()
            .map(|(idx, s)| node_from(s, gauge.map_or(0.0, |g| g(idx / n2, idx % n2))))
            .collect::<Result<_>>()?;
        let rows: Vec<(Vec<Plaquette>, Vec<usize>, bool)> = (0..n1)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::with_capacity(n2);
                let mut bad_rows = Vec::new();
                let mut bad_here = false;
                let i1 = (i + 1) % n1;
                let (a0, a1) = (grid.u1[i], grid.next1(i));
                for j in 0..n2 {
                    let j1 = (j + 1) % n2;
                    let (b0, b1) = (grid.u2[j], grid.next2(j));
                    let mut loop_ids = [(i, j), (i1, j), (i1, j1), (i, j1)];
                    if !ccw {
                        loop_ids.reverse();
                    }
                    let mut flux_pair = [0.0; 2];
                    let mut weak = false;
                    for (b, f) in flux_pair.iter_mut().enumerate() {
                        let mut prod = C64::new(1.0, 0.0);
                        for s in 0..4 {
                            let (p, q) = (loop_ids[s], loop_ids[(s + 1) % 4]);
                            let (u, v) = (&nodes[p.0 * n2 + p.1], &nodes[q.0 * n2 + q.1]);
                            let l = if b == 0 { link(&u.middle, &v.middle) } else { link(&u.other, &v.other) };
                            weak |= l.norm() < spec.link_floor;
                            prod *= l;
                        }
                        *f = -prod.arg();
                    }
                    let center = grid.point(&geom, 0.5 * (a0 + a1), 0.5 * (b0 + b1));
                    let e1 = [(a1 - a0) * geom.g1[0], (a1 - a0) * geom.g1[1]];
                    let e2 = [(b1 - b0) * geom.g2[0], (b1 - b0) * geom.g2[1]];
                    let area = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
                    let inside = ctx.inside_ring(center).unwrap_or(false);
                    let flux = if inside { [flux_pair[1], flux_pair[0], 0.0] } else { [0.0, flux_pair[0], flux_pair[1]] };
                    if weak || flux_pair.iter().any(|f| f.abs() > spec.flux_limit) {
                        bad_here = true;
                        bad_rows.push(j);
                    }
                    out.push(Plaquette { center, area, flux });
                }
                (out, bad_rows, bad_here)
            })
            .collect();
        let bad_cols: Vec<usize> = rows.iter().enumerate().filter(|(_, r)| r.2).map(|(i, _)| i).collect();
        let mut bad_rows: Vec<usize> = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
        bad_rows.sort_unstable();
        bad_rows.dedup();
        if !bad_cols.is_empty() && passes < spec.max_passes && n1.max(n2) < 8000 {
            grid.refine(&bad_cols, &bad_rows);
            passes += 1;
            continue;
        }
        let plaquettes: Vec<Plaquette> = rows.into_iter().flat_map(|r| r.0).collect();
        let mut raw = [0.0; 3];
        for p in &plaquettes {
            for b in 0..3 {
                raw[b] += p.flux[b];
            }
        }
        for r in raw.iter_mut() {
            *r /= 2.0 * std::f64::consts::PI;
        }
        let chern = raw.map(|r| r.round() as i32);
        if raw.iter().zip(&chern).any(|(r, c)| (r - *c as f64).abs() > 0.2) {
            return Err(Error::Numerical(format!("Berry flux not quantised: {raw:?}; refine the grid")));
        }
        return Ok(BerryGrid { grid, plaquettes, raw, chern, windows, passes });
    }
}

pub fn chern_numbers(spec: &ChernSpec, ctx: &BandContext) -> Result<[i32; 3]> {
    Ok(berry_map(spec, ctx)?.chern)
}
