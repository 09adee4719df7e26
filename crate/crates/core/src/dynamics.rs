//! Finite hexagonal patches: disorder, real-space Hamiltonian, spectra,
//! driven non-Hermitian evolution, transport metrics and the Markov bound.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::greens::{greens_real_scaled, onsite_term};
use crate::lattice::{sub, LatticeGeometry, Vec2};
use crate::linalg::{eig_dense, inverse_dense};
use crate::units::PhysicalParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FillingMode {
    /// Each site kept independently with probability `filling`.
    Bernoulli,
    /// Exactly round(filling·N) sites kept.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disorder {
    pub filling: f64,
    /// Inhomogeneous broadening (gamma).
    pub sigma_inh: f64,
    pub seed: u64,
    pub mode: FillingMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteLattice {
    /// Positions in units of a.
    pub positions: Vec<Vec2>,
    /// Integer coordinates along r1, r2.
    pub coords: Vec<(i64, i64)>,
    /// Transition-frequency offsets from ω_A (gamma).
    pub omega: Vec<f64>,
    pub present: Vec<bool>,
    pub shells: usize,
    pub disorder: Option<Disorder>,
}

/// Centred hexagonal patch of the triangular lattice, 3k(k+1)+1 sites.
pub fn hexagon_lattice(shells: usize) -> FiniteLattice {
    let geom = LatticeGeometry::new(3.0);
    let k = shells as i64;
    let mut coords = Vec::with_capacity(3 * shells * (shells + 1) + 1);
    for n1 in -k..=k {
        for n2 in -k..=k {
            if (n1 + n2).abs() <= k {
                coords.push((n1, n2));
            }
        }
    }
    let positions = coords.iter().map(|&(a, b)| geom.site(a, b)).collect();
    let n = coords.len();
    FiniteLattice { positions, coords, omega: vec![0.0; n], present: vec![true; n], shells, disorder: None }
}

impl FiniteLattice {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn n_present(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    /// Indices of occupied sites, in lattice order; Hamiltonian rows follow this order.
    pub fn occupied(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.present[i]).collect()
    }

    pub fn index_of(&self, n1: i64, n2: i64) -> Option<usize> {
        self.coords.iter().position(|&c| c == (n1, n2))
    }

    /// For each occupied site (in `occupied()` order), its nearest-neighbour
    /// hop distance to the boundary. Boundary sites (depth 0) touch an empty
    /// cell connected to the outside; interior vacancies do not count.
    pub fn boundary_depth(&self) -> Vec<usize> {
        let occ = self.occupied();
        let slot: HashMap<(i64, i64), usize> = occ.iter().enumerate().map(|(s, &i)| (self.coords[i], s)).collect();
        let k = self.shells as i64 + 1;
        let inside = |c: (i64, i64)| c.0.abs() <= k && c.1.abs() <= k && (c.0 + c.1).abs() <= k;
        // flood the empty cells from the ring just outside the patch
        let mut exterior = std::collections::HashSet::new();
        let mut queue: VecDeque<(i64, i64)> = VecDeque::new();
        for a in -k..=k {
            for b in -k..=k {
                let c = (a, b);
                if inside(c) && (a.abs() == k || b.abs() == k || (a + b).abs() == k) {
                    exterior.insert(c);
                    queue.push_back(c);
                }
            }
        }
        while let Some((a, b)) = queue.pop_front() {
            for (da, db) in NB {
                let c = (a + da, b + db);
                if inside(c) && !slot.contains_key(&c) && exterior.insert(c) {
                    queue.push_back(c);
                }
            }
        }
        let neighbours: Vec<Vec<usize>> = occ
            .iter()
            .map(|&i| {
                let (a, b) = self.coords[i];
                NB.iter().filter_map(|(da, db)| slot.get(&(a + da, b + db)).copied()).collect()
            })
            .collect();
        let mut depth = vec![usize::MAX; occ.len()];
        let mut queue = VecDeque::new();
        for (s, &i) in occ.iter().enumerate() {
            let (a, b) = self.coords[i];
            if NB.iter().any(|(da, db)| exterior.contains(&(a + da, b + db))) {
                depth[s] = 0;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            for &t in &neighbours[s] {
                if depth[t] == usize::MAX {
                    depth[t] = depth[s] + 1;
                    queue.push_back(t);
                }
            }
        }
        depth
    }
}

const NB: [(i64, i64); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];

fn site_rng(seed: u64, site: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(site as u64);
    rng
}

/// Thin the lattice and broaden the frequencies. Every site draws from its
/// own counter-based stream, so the result does not depend on evaluation order.
pub fn apply_disorder(lattice: &FiniteLattice, disorder: Disorder) -> Result<FiniteLattice> {
    if !(disorder.filling > 0.0 && disorder.filling <= 1.0) {
        return Err(Error::Config(format!("filling must be in (0, 1], got {}", disorder.filling)));
    }
    if !(disorder.sigma_inh.is_finite() && disorder.sigma_inh >= 0.0) {
        return Err(Error::Config(format!("sigma_inh must be >= 0, got {}", disorder.sigma_inh)));
    }
    let draws: Vec<(f64, f64)> = (0..lattice.len())
        .map(|i| {
            let mut rng = site_rng(disorder.seed, i);
            let u: f64 = rng.random();
            let z: f64 = rng.sample(StandardNormal);
            (u, z)
        })
        .collect();
    let mut out = lattice.clone();
    match disorder.mode {
        FillingMode::Bernoulli => {
            for (i, d) in draws.iter().enumerate() {
                out.present[i] = lattice.present[i] && d.0 < disorder.filling;
            }
        }
        FillingMode::Exact => {
            let keep = (disorder.filling * lattice.n_present() as f64).round() as usize;
            let mut order: Vec<usize> = lattice.occupied();
            order.sort_by(|&a, &b| draws[a].0.total_cmp(&draws[b].0).then(a.cmp(&b)));
            out.present = vec![false; lattice.len()];
            for &i in order.iter().take(keep) {
                out.present[i] = true;
            }
        }
    }
    for (i, d) in draws.iter().enumerate() {
        out.omega[i] = lattice.omega[i] + disorder.sigma_inh * d.1;
    }
    out.disorder = Some(disorder);
    Ok(out)
}

/// Real-space Hamiltonian over occupied sites, circular basis (σ+, σ−) per
/// site, frequencies in gamma offset from ω_A.
pub fn assemble_hamiltonian(lattice: &FiniteLattice, mu_b: f64, params: &PhysicalParams, free_space: bool) -> Result<Mat<C64>> {
    let occ = lattice.occupied();
    if occ.is_empty() {
        return Err(Error::Domain("lattice has no occupied sites".into()));
    }
    let s = params.scaled();
    let geom = LatticeGeometry::new(s.wavelength);
    let onsite = onsite_term(params) - C64::new(0.0, if free_space { 0.5 * s.gamma_0 } else { 0.0 });
    let n = occ.len();
    let rows: Vec<Vec<C64>> = occ
        .par_iter()
        .map(|&i| {
            let mut row = vec![C64::new(0.0, 0.0); 4 * n];
            for (b, &j) in occ.iter().enumerate() {
                if i == j {
                    let w = lattice.omega[i];
                    row[2 * b] = C64::new(w + mu_b, 0.0) + onsite;
                    row[2 * n + 2 * b + 1] = C64::new(w - mu_b, 0.0) + onsite;
                    continue;
                }
                let r = sub(lattice.positions[i], lattice.positions[j]);
                let g = greens_real_scaled(r, s.k_amp, s.xi, &geom).map_err(|_| Error::Domain(format!("sites {i} and {j} coincide")))?.m;
                for a in 0..2 {
                    for c in 0..2 {
                        row[a * 2 * n + 2 * b + c] = g[a][c] * s.g_pref;
                    }
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(Mat::from_fn(2 * n, 2 * n, |r, c| rows[r / 2][(r % 2) * 2 * n + c]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StateClass {
    Edge,
    Bulk,
}

impl StateClass {
    pub fn name(self) -> &'static str {
        match self {
            StateClass::Edge => "edge",
            StateClass::Bulk => "bulk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    /// Boundary region: sites within this many hops of the boundary.
    pub depth: usize,
    /// Boundary weight above which a state counts as an edge state.
    pub edge_threshold: f64,
    /// Bulk states broader than this (gamma) radiate into the slab and do
    /// not bound the gap.
    pub max_linewidth: f64,
}

impl SpectrumOptions {
    /// Defaults scaled to the Zeeman splitting.
    pub fn for_field(mu_b: f64) -> Self {
        Self { depth: 1, edge_threshold: 0.5, max_linewidth: 0.1 * mu_b.abs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Eigenvalues sorted by real part.
    pub values: Vec<C64>,
    pub boundary_weight: Vec<f64>,
    pub classes: Vec<StateClass>,
    /// (top of the lower bulk band, bottom of the upper bulk band), if found.
    pub gap: Option<(f64, f64)>,
    pub in_gap: usize,
    pub in_gap_edge: usize,
}

impl SpectrumReport {
    pub fn gap_width(&self) -> Option<f64> {
        self.gap.map(|(a, b)| b - a)
    }
}

pub fn spectrum_report(h: &Mat<C64>, lattice: &FiniteLattice, opts: SpectrumOptions) -> Result<SpectrumReport> {
    let eig = eig_dense(h)?;
    let depth = lattice.boundary_depth();
    let n = depth.len();
    if h.nrows() != 2 * n {
        return Err(Error::Domain(format!("matrix of size {} does not match {} occupied sites", h.nrows(), n)));
    }
    let mut rows: Vec<(C64, f64)> = (0..2 * n)
        .map(|j| {
            let v = eig.vectors.col(j);
            let mut tot = 0.0;
            let mut edge = 0.0;
            for s in 0..n {
                let w = v[2 * s].norm_sqr() + v[2 * s + 1].norm_sqr();
                tot += w;
                if depth[s] <= opts.depth {
                    edge += w;
                }
            }
            (eig.values[j], if tot > 0.0 { edge / tot } else { 0.0 })
        })
        .collect();
    rows.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let classes: Vec<StateClass> =
        rows.iter().map(|r| if r.1 > opts.edge_threshold { StateClass::Edge } else { StateClass::Bulk }).collect();
    let gap = locate_gap(&rows, &classes, opts.max_linewidth);
    let (mut in_gap, mut in_gap_edge) = (0, 0);
    if let Some((lo, hi)) = gap {
        for (r, c) in rows.iter().zip(&classes) {
            if r.0.re > lo && r.0.re < hi {
                in_gap += 1;
                if *c == StateClass::Edge {
                    in_gap_edge += 1;
                }
            }
        }
    }
    Ok(SpectrumReport {
        values: rows.iter().map(|r| r.0).collect(),
        boundary_weight: rows.iter().map(|r| r.1).collect(),
        classes,
        gap,
        in_gap,
        in_gap_edge,
    })
}

/// Widest window between consecutive long-lived bulk states, searched
/// between the 5th and 95th percentile of those states.
fn locate_gap(rows: &[(C64, f64)], classes: &[StateClass], max_linewidth: f64) -> Option<(f64, f64)> {
    let bulk: Vec<f64> = rows
        .iter()
        .zip(classes)
        .filter(|(r, c)| **c == StateClass::Bulk && -2.0 * r.0.im <= max_linewidth)
        .map(|(r, _)| r.0.re)
        .collect();
    if bulk.len() < 20 {
        return None;
    }
    let (a, b) = (bulk.len() / 20, bulk.len() * 19 / 20);
    let mut best: Option<(f64, f64)> = None;
    for w in bulk[a..=b].windows(2) {
        if best.is_none_or(|(lo, hi)| w[1] - w[0] > hi - lo) {
            best = Some((w[0], w[1]));
        }
    }
    best.filter(|(lo, hi)| hi > lo)
}

/// Gaussian-ramped coherent drive on one site.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveConfig {
    /// Lattice index of the driven emitter.
    pub site: usize,
    /// Peak Rabi frequency Ω (gamma).
    pub rabi: f64,
    /// Laser frequency offset from ω_A (gamma).
    pub omega_l: f64,
    pub t0: f64,
    pub sigma: f64,
}

impl DriveConfig {
    pub fn amplitude(&self, t: f64) -> f64 {
        let x = (t - self.t0) / self.sigma;
        self.rabi * (-0.5 * x * x).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Initial time step (1/gamma); halved until converged.
    pub step: f64,
    /// Max-norm difference to the halved-step run, relative to max ‖c‖.
    pub tol: f64,
    pub max_halvings: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { step: 1.0, tol: 1e-6, max_halvings: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSeries {
    pub times: Vec<f64>,
    /// Lattice indices of the occupied sites, in Hamiltonian order.
    pub sites: Vec<usize>,
    /// Per snapshot, per occupied site: |c_σ+|² + |c_σ−|².
    pub probs: Vec<Vec<f64>>,
    pub norm: Vec<f64>,
    /// Step size that met the tolerance.
    pub step: f64,
    pub error_estimate: f64,
}

/// Eigen-decomposition of H reused for every time stamp.
pub struct Propagator {
    pub values: Vec<C64>,
    v: Mat<C64>,
    vinv: Mat<C64>,
}

impl Propagator {
    pub fn new(h: &Mat<C64>) -> Result<Self> {
        let eig = eig_dense(h)?;
        let vinv = inverse_dense(&eig.vectors)?;
        Ok(Self { values: eig.values, v: eig.vectors, vinv })
    }

    fn to_modes(&self, x: &[C64]) -> Vec<C64> {
        let n = x.len();
        (0..n).map(|i| (0..n).map(|j| self.vinv[(i, j)] * x[j]).sum()).collect()
    }

    fn to_sites(&self, a: &[C64]) -> Vec<C64> {
        let n = a.len();
        let v = &self.v;
        (0..n).into_par_iter().map(|i| (0..n).map(|j| v[(i, j)] * a[j]).sum()).collect()
    }
}

// 8-point Gauss–Legendre on [0, 1]
const GL_X: [f64; 8] = [
    0.019855071751231856,
    0.10166676129318664,
    0.2372337950418355,
    0.4082826787521751,
    0.591717321247825,
    0.7627662049581645,
    0.8983332387068134,
    0.9801449282487681,
];
const GL_W: [f64; 8] = [
    0.05061426814518813,
    0.11119051722668724,
    0.15685332293894363,
    0.181341891689181,
    0.181341891689181,
    0.15685332293894363,
    0.11119051722668724,
    0.05061426814518813,
];

/// Amplitudes in the frame rotating at ω_L:
/// i dc/dt = (H − ω_L) c + (Ω(t)/2) s, with s = (1, 1)/√2 on the driven site.
pub fn evolve(
    prop: &Propagator,
    lattice: &FiniteLattice,
    drive: Option<&DriveConfig>,
    initial: Option<&[C64]>,
    times: &[f64],
    opts: EvolveOptions,
) -> Result<SnapshotSeries> {
    let occ = lattice.occupied();
    let dim = 2 * occ.len();
    if prop.values.len() != dim {
        return Err(Error::Domain("propagator does not match the lattice".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::Domain("snapshot times must be non-negative and ascending".into()));
    }
    let source = match drive {
        Some(d) => {
            let slot = occ.iter().position(|&i| i == d.site).ok_or_else(|| Error::Domain(format!("driven site {} is not occupied", d.site)))?;
            let mut s = vec![C64::new(0.0, 0.0); dim];
            s[2 * slot] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            s[2 * slot + 1] = s[2 * slot];
            Some(prop.to_modes(&s))
        }
        None => None,
    };
    let a0 = match initial {
        Some(c) if c.len() == dim => prop.to_modes(c),
        Some(_) => return Err(Error::Domain("initial state has the wrong dimension".into())),
        None => vec![C64::new(0.0, 0.0); dim],
    };
    let omega_l = drive.map_or(0.0, |d| d.omega_l);
    let mu: Vec<C64> = prop.values.iter().map(|l| l - omega_l).collect();
    let run = |h: f64| -> Vec<Vec<C64>> {
        let mut a = a0.clone();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            let span = target - t;
            if span > 0.0 {
                let steps = (span / h).ceil().max(1.0) as usize;
                let dt = span / steps as f64;
                let decay: Vec<C64> = mu.iter().map(|m| (C64::new(0.0, -dt) * m).exp()).collect();
                // per-node kernel e^{-iμ(dt - x dt)}
                let kern: Vec<[C64; 8]> = mu.iter().map(|m| GL_X.map(|x| (C64::new(0.0, -(1.0 - x) * dt) * m).exp())).collect();
                for step in 0..steps {
                    let t_start = t + step as f64 * dt;
                    let f: [f64; 8] = match drive {
                        Some(d) => GL_X.map(|x| d.amplitude(t_start + x * dt)),
                        None => [0.0; 8],
                    };
                    for n in 0..dim {
                        let mut next = decay[n] * a[n];
                        if let Some(b) = &source {
                            let mut q = C64::new(0.0, 0.0);
                            for k in 0..8 {
                                q += kern[n][k] * (GL_W[k] * f[k]);
                            }
                            next += C64::new(0.0, -0.5 * dt) * b[n] * q;
                        }
                        a[n] = next;
                    }
                }
                t = target;
            }
            out.push(a.clone());
        }
        out
    };
    let mut h = opts.step;
    let mut coarse = run(h);
    let mut err = f64::INFINITY;
    for _ in 0..=opts.max_halvings {
        let fine = run(h / 2.0);
        let sites_c: Vec<Vec<C64>> = coarse.iter().map(|a| prop.to_sites(a)).collect();
        let sites_f: Vec<Vec<C64>> = fine.iter().map(|a| prop.to_sites(a)).collect();
        let scale = sites_f.iter().map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let diff = sites_c
            .iter()
            .zip(&sites_f)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        err = if scale > 0.0 { diff / scale } else { diff };
        h /= 2.0;
        coarse = fine;
        if err < opts.tol {
            let probs: Vec<Vec<f64>> = sites_f.iter().map(|c| c.chunks(2).map(|p| p[0].norm_sqr() + p[1].norm_sqr()).collect()).collect();
            let norm = probs.iter().map(|p| p.iter().sum::<f64>()).collect();
            return Ok(SnapshotSeries { times: times.to_vec(), sites: occ, probs, norm, step: h, error_estimate: err });
        }
    }
    Err(Error::Numerical(format!("time stepping did not reach tolerance {:e} (last error {err:e})", opts.tol)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportMetrics {
    /// Boundary-region population over total population, per snapshot.
    pub boundary_fraction: Vec<f64>,
    /// Unwrapped angle of the boundary centroid relative to the driven site.
    pub centroid_angle: Vec<f64>,
    /// Sign of the centroid's angular velocity (−1 clockwise), per snapshot;
    /// the first snapshot has none.
    pub chirality: Vec<i8>,
    /// Contiguous clockwise arc from the driven site carrying boundary
    /// population, per snapshot (radians).
    pub arc: Vec<f64>,
    /// Largest arc over the series.
    pub arc_progress: f64,
    pub survival: Vec<f64>,
}

/// Angle of every occupied site about the patch centre, relative to the driven site.
fn relative_angles(lattice: &FiniteLattice, sites: &[usize], drive_site: usize) -> Vec<f64> {
    let d = lattice.positions[drive_site];
    let th0 = d[1].atan2(d[0]);
    sites
        .iter()
        .map(|&i| {
            let p = lattice.positions[i];
            let mut a = p[1].atan2(p[0]) - th0;
            while a > PI {
                a -= 2.0 * PI;
            }
            while a <= -PI {
                a += 2.0 * PI;
            }
            a
        })
        .collect()
}

pub fn transport_metrics(series: &SnapshotSeries, lattice: &FiniteLattice, drive_site: usize, depth: usize) -> TransportMetrics {
    let depths = lattice.boundary_depth();
    let phi = relative_angles(lattice, &series.sites, drive_site);
    let mut boundary_fraction = Vec::new();
    let mut centroid_angle: Vec<f64> = Vec::new();
    for p in &series.probs {
        let tot: f64 = p.iter().sum();
        let mut edge = 0.0;
        let mut z = C64::new(0.0, 0.0);
        for (s, &w) in p.iter().enumerate() {
            if depths[s] <= depth {
                edge += w;
                z += C64::from_polar(w, phi[s]);
            }
        }
        boundary_fraction.push(if tot > 0.0 { edge / tot } else { 0.0 });
        let raw = if z.norm() > 0.0 { z.arg() } else { 0.0 };
        let ang = match centroid_angle.last() {
            Some(&prev) => prev + (raw - prev + PI).rem_euclid(2.0 * PI) - PI,
            None => raw,
        };
        centroid_angle.push(ang);
    }
    let chirality =
        centroid_angle.windows(2).map(|w| if w[1] < w[0] { -1 } else if w[1] > w[0] { 1 } else { 0 }).collect::<Vec<i8>>();
    let arc: Vec<f64> = series.probs.iter().map(|p| clockwise_reach(p, &phi, &depths, depth)).collect();
    let arc_progress = arc.iter().fold(0.0_f64, |m, a| m.max(*a));
    TransportMetrics { boundary_fraction, centroid_angle, chirality, arc, arc_progress, survival: series.norm.clone() }
}

const ARC_BINS: usize = 72;
const ARC_FLOOR: f64 = 1e-2;
// boundary-region sites per bin, so that sparse rims leave no empty bins
const SITES_PER_BIN: usize = 4;

/// Clockwise angle from the driven site to the leading edge of the packet:
/// walk clockwise from the fullest angular bin until boundary population
/// drops below ARC_FLOOR of that bin.
fn clockwise_reach(p: &[f64], phi: &[f64], depths: &[usize], depth: usize) -> f64 {
    let region = depths.iter().filter(|&&d| d <= depth).count();
    let nbins = (region / SITES_PER_BIN).clamp(8, ARC_BINS);
    let width = 2.0 * PI / nbins as f64;
    let mut bins = vec![0.0; nbins];
    for (s, &w) in p.iter().enumerate() {
        if depths[s] <= depth {
            // clockwise angle in [0, 2π), the driven site centred in bin 0
            let psi = (-phi[s] + 0.5 * width).rem_euclid(2.0 * PI);
            bins[((psi / width) as usize).min(nbins - 1)] += w;
        }
    }
    let (peak, top) = bins.iter().enumerate().fold((0, 0.0_f64), |m, (i, &b)| if b > m.1 { (i, b) } else { m });
    if top <= 0.0 {
        return 0.0;
    }
    let mut end = peak;
    for step in 1..nbins {
        let j = peak + step;
        if j >= nbins || bins[j] < ARC_FLOOR * top {
            break;
        }
        end = j;
    }
    end as f64 * width
}

/// Markov-validity bound for an array of N emitters with gap Δ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    /// √N (units of a).
    pub length: f64,
    /// L / v_s (seconds).
    pub tau_c: f64,
    /// 1/Δ (seconds).
    pub tau_a: f64,
    pub margin: f64,
    pub lambda_edge: f64,
    /// (v_s / (a γ √Λ))^{2/3}, in gamma.
    pub n_max: f64,
    pub pass: bool,
}

pub fn markov_check(params: &PhysicalParams, n_sites: usize, gap: f64, lambda_edge: f64, threshold: f64) -> Result<ValidityReport> {
    if n_sites == 0 || !(gap > 0.0) || !(lambda_edge > 0.0) || !(threshold > 0.0) {
        return Err(Error::Domain("markov_check needs positive inputs".into()));
    }
    let p = &params.primaries;
    let length = (n_sites as f64).sqrt();
    let tau_c = length * params.a / p.v_s;
    let tau_a = 1.0 / (gap * p.gamma);
    let n_max = (p.v_s / (params.a * p.gamma * lambda_edge.sqrt())).powf(2.0 / 3.0);
    Ok(ValidityReport {
        length,
        tau_c,
        tau_a,
        margin: tau_a / tau_c,
        lambda_edge,
        n_max,
        pass: gap * p.gamma < threshold / tau_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues_dense;
    use crate::units::standard_params;

    fn params() -> PhysicalParams {
        standard_params(18.73, 0.5)
    }

    fn only(lattice: &FiniteLattice, keep: &[usize]) -> FiniteLattice {
        let mut l = lattice.clone();
        l.present = (0..l.len()).map(|i| keep.contains(&i)).collect();
        l
    }

    #[test]
    fn hexagon_counts() {
        for (k, n) in [(0, 1), (1, 7), (3, 37), (22, 1519)] {
            let l = hexagon_lattice(k);
            assert_eq!(l.len(), n);
            assert_eq!(l.n_present(), n);
        }
        let l = hexagon_lattice(3);
        let d = l.boundary_depth();
        assert_eq!(d.iter().filter(|&&x| x == 0).count(), 18);
        assert_eq!(d[l.index_of(0, 0).unwrap()], 3);
    }

    #[test]
    fn interior_vacancy_is_not_boundary() {
        let mut l = hexagon_lattice(3);
        let c = l.index_of(0, 0).unwrap();
        l.present[c] = false;
        let d = l.boundary_depth();
        assert_eq!(d.iter().filter(|&&x| x == 0).count(), 18);
        assert!(d.iter().all(|&x| x <= 2));
    }

    #[test]
    fn disorder_is_deterministic_and_binomial() {
        let base = hexagon_lattice(22);
        let mk = |seed, mode| apply_disorder(&base, Disorder { filling: 0.9, sigma_inh: 0.1, seed, mode }).unwrap();
        assert_eq!(mk(7, FillingMode::Bernoulli), mk(7, FillingMode::Bernoulli));
        assert_ne!(mk(7, FillingMode::Bernoulli).present, mk(8, FillingMode::Bernoulli).present);
        // mean 1367.1, sd 11.7
        for seed in 0..8 {
            let n = mk(seed, FillingMode::Bernoulli).n_present();
            assert!((1332..=1402).contains(&n), "seed {seed}: {n}");
        }
        assert_eq!(mk(3, FillingMode::Exact).n_present(), 1367);
        let w = &mk(3, FillingMode::Exact).omega;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        assert!(mean.abs() < 0.01 && (sd - 0.1).abs() < 0.01, "{mean} {sd}");
        assert!(apply_disorder(&base, Disorder { filling: 1.2, sigma_inh: 0.0, seed: 0, mode: FillingMode::Exact }).is_err());
    }

    #[test]
    fn single_emitter_levels() {
        let p = params();
        let l = hexagon_lattice(0);
        let gpc = crate::greens::gamma_pc(&p);
        for (free, extra) in [(false, 0.0), (true, p.scaled().gamma_0)] {
            let h = assemble_hamiltonian(&l, 0.7, &p, free).unwrap();
            let mut ev = eigenvalues_dense(&h).unwrap();
            ev.sort_by(|a, b| a.re.total_cmp(&b.re));
            let want = [C64::new(-0.7, -0.5 * (gpc + extra)), C64::new(0.7, -0.5 * (gpc + extra))];
            for (e, w) in ev.iter().zip(want) {
                assert!((e - w).norm() < 1e-12, "{e} vs {w}");
            }
        }
    }

    #[test]
    fn pair_blocks_match_greens() {
        let p = params();
        let s = p.scaled();
        let geom = LatticeGeometry::new(s.wavelength);
        let base = hexagon_lattice(1);
        let (i, j) = (base.index_of(0, 0).unwrap(), base.index_of(1, 0).unwrap());
        let l = only(&base, &[i, j]);
        let h = assemble_hamiltonian(&l, 0.3, &p, false).unwrap();
        assert_eq!((h.nrows(), h.ncols()), (4, 4));
        let occ = l.occupied();
        let (a, b) = (occ[0], occ[1]);
        let g = greens_real_scaled(sub(l.positions[a], l.positions[b]), s.k_amp, s.xi, &geom).unwrap().m;
        for r in 0..2 {
            for c in 0..2 {
                assert!((h[(r, 2 + c)] - g[r][c] * s.g_pref).norm() < 1e-14);
            }
        }
        assert!((h[(0, 0)] - C64::new(0.3, 0.0) - onsite_term(&p)).norm() < 1e-14);
        assert!(h[(0, 1)].norm() == 0.0);
    }

    #[test]
    fn hamiltonian_is_passive() {
        let p = params();
        let l = hexagon_lattice(4);
        let h = assemble_hamiltonian(&l, 0.5, &p, true).unwrap();
        let n = h.nrows();
        // (H − H†)/2i must be negative semidefinite
        let a = Mat::from_fn(n, n, |r, c| (h[(r, c)] - h[(c, r)].conj()) * C64::new(0.0, -0.5));
        let ev = eigenvalues_dense(&a).unwrap();
        let top = ev.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
        assert!(top < 1e-9, "{top}");
        assert!(eigenvalues_dense(&h).unwrap().iter().all(|e| e.im < 1e-9));
    }

    #[test]
    fn undriven_norm_decays() {
        let p = params();
        let l = hexagon_lattice(3);
        let h = assemble_hamiltonian(&l, 0.5, &p, true).unwrap();
        let prop = Propagator::new(&h).unwrap();
        let mut c0 = vec![C64::new(0.0, 0.0); h.nrows()];
        let centre = l.occupied().iter().position(|&i| i == l.index_of(0, 0).unwrap()).unwrap();
        c0[2 * centre] = C64::new(1.0, 0.0);
        let times: Vec<f64> = (0..=20).map(|i| 2.0 * i as f64).collect();
        let s = evolve(&prop, &l, None, Some(&c0), &times, EvolveOptions::default()).unwrap();
        assert!((s.norm[0] - 1.0).abs() < 1e-9);
        assert!(s.norm.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", s.norm);
        assert!(*s.norm.last().unwrap() < 1.0);
    }

    /// Plain RK4 in the site basis as an independent integrator.
    fn rk4(h: &Mat<C64>, l: &FiniteLattice, d: &DriveConfig, t_end: f64, dt: f64) -> Vec<C64> {
        let n = h.nrows();
        let slot = l.occupied().iter().position(|&i| i == d.site).unwrap();
        let rhs = |t: f64, c: &[C64]| -> Vec<C64> {
            let f = 0.5 * d.amplitude(t) * std::f64::consts::FRAC_1_SQRT_2;
            (0..n)
                .map(|r| {
                    let mut acc = -d.omega_l * c[r];
                    for k in 0..n {
                        acc += h[(r, k)] * c[k];
                    }
                    if r / 2 == slot {
                        acc += f;
                    }
                    C64::new(0.0, -1.0) * acc
                })
                .collect()
        };
        let mut c = vec![C64::new(0.0, 0.0); n];
        let steps = (t_end / dt).round() as usize;
        for k in 0..steps {
            let t = k as f64 * dt;
            let k1 = rhs(t, &c);
            let y: Vec<C64> = c.iter().zip(&k1).map(|(a, b)| a + b * (0.5 * dt)).collect();
            let k2 = rhs(t + 0.5 * dt, &y);
            let y: Vec<C64> = c.iter().zip(&k2).map(|(a, b)| a + b * (0.5 * dt)).collect();
            let k3 = rhs(t + 0.5 * dt, &y);
            let y: Vec<C64> = c.iter().zip(&k3).map(|(a, b)| a + b * dt).collect();
            let k4 = rhs(t + dt, &y);
            for i in 0..n {
                c[i] += (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (dt / 6.0);
            }
        }
        c
    }

    #[test]
    fn driven_evolution_matches_rk4() {
        let p = params();
        let l = hexagon_lattice(2);
        let h = assemble_hamiltonian(&l, 0.5, &p, false).unwrap();
        let prop = Propagator::new(&h).unwrap();
        let d = DriveConfig { site: l.index_of(2, 0).unwrap(), rabi: 0.01, omega_l: -0.3, t0: 15.0, sigma: 5.0 };
        let s = evolve(&prop, &l, Some(&d), None, &[0.0, 30.0], EvolveOptions { tol: 1e-9, ..Default::default() }).unwrap();
        let c = rk4(&h, &l, &d, 30.0, 0.005);
        let want: Vec<f64> = c.chunks(2).map(|p| p[0].norm_sqr() + p[1].norm_sqr()).collect();
        let got = &s.probs[1];
        let scale = want.iter().cloned().fold(0.0, f64::max);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6 * scale, "{g} vs {w}");
        }
        assert!(s.probs[0].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn evolve_rejects_bad_input() {
        let p = params();
        let l = hexagon_lattice(1);
        let h = assemble_hamiltonian(&l, 0.5, &p, false).unwrap();
        let prop = Propagator::new(&h).unwrap();
        let mut gone = l.clone();
        gone.present[0] = false;
        let d = DriveConfig { site: 0, rabi: 0.01, omega_l: 0.0, t0: 1.0, sigma: 1.0 };
        assert!(evolve(&prop, &l, Some(&d), None, &[2.0, 1.0], EvolveOptions::default()).is_err());
        assert!(evolve(&prop, &gone, Some(&d), None, &[1.0], EvolveOptions::default()).is_err());
    }

    #[test]
    fn stationary_distribution_has_no_chirality() {
        let l = hexagon_lattice(5);
        let occ = l.occupied();
        let p = vec![1.0 / occ.len() as f64; occ.len()];
        let series = SnapshotSeries {
            times: vec![0.0, 1.0, 2.0],
            sites: occ,
            probs: vec![p.clone(), p.clone(), p],
            norm: vec![1.0; 3],
            step: 1.0,
            error_estimate: 0.0,
        };
        let m = transport_metrics(&series, &l, l.index_of(0, 5).unwrap(), 1);
        assert_eq!(m.chirality, vec![0, 0]);
        assert!(m.boundary_fraction.iter().all(|f| (f - 54.0 / 91.0).abs() < 1e-12));
    }

    #[test]
    fn arc_follows_clockwise_packet() {
        let l = hexagon_lattice(22);
        let occ = l.occupied();
        let drive = l.index_of(0, 22).unwrap();
        let phi = relative_angles(&l, &occ, drive);
        let depths = l.boundary_depth();
        // boundary population on a window of clockwise angles [lo, hi]
        let packet = |lo: f64, hi: f64| -> Vec<f64> {
            (0..occ.len()).map(|s| if depths[s] == 0 && -phi[s] >= lo && -phi[s] <= hi { 1.0 } else { 0.0 }).collect()
        };
        let probs = vec![packet(-0.1, 0.1), packet(0.5, 1.2), packet(1.5, 2.5)];
        let series = SnapshotSeries { times: vec![0.0, 1.0, 2.0], sites: occ, probs, norm: vec![1.0; 3], step: 1.0, error_estimate: 0.0 };
        let m = transport_metrics(&series, &l, drive, 0);
        assert_eq!(m.chirality, vec![-1, -1]);
        assert!(m.arc[0] < 0.2 && (m.arc[1] - 1.2).abs() < 0.2 && (m.arc[2] - 2.5).abs() < 0.2, "{:?}", m.arc);
        assert_eq!(m.arc_progress, m.arc[2]);
    }

    #[test]
    fn markov_bound_scaling() {
        let p = params();
        let r = markov_check(&p, 1519, 0.8, 1600.0, 0.1).unwrap();
        assert!((r.n_max - 253.6).abs() < 1.0, "{}", r.n_max);
        let r4 = markov_check(&p, 1519, 0.8, 6400.0, 0.1).unwrap();
        assert!((r.n_max / r4.n_max - 4f64.powf(1.0 / 3.0)).abs() < 1e-12);
        let big = markov_check(&p, 4 * 1519, 0.8, 1600.0, 0.1).unwrap();
        assert!((big.tau_c / r.tau_c - 2.0).abs() < 1e-12);
        assert!(markov_check(&p, 0, 0.8, 1600.0, 0.1).is_err());
    }
}
