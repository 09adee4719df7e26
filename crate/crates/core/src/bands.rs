//! 2x2 Bloch matrix of the emitter lattice, band assignment and gap scans.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{momentum_greens, DiracConeModel, PhotonicEnv};
use crate::error::{Error, Result};
use crate::lattice::{norm, sub, LatticeGeometry, Valley, Vec2};
use crate::linalg::{add2, eig2, scale2, Mat2, ZERO2};
use crate::units::PhysicalParams;

/// Z = -i μB (x̂ ŷᵀ - ŷ x̂ᵀ): σ+ is shifted by +μB.
pub fn zeeman_cartesian(mu_b: f64) -> Mat2 {
    let mut z = ZERO2;
    z[0][1] = C64::new(0.0, -mu_b);
    z[1][0] = C64::new(0.0, mu_b);
    z
}

/// σ− in Cartesian components.
pub fn sigma_minus() -> [C64; 2] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [C64::new(s, 0.0), C64::new(0.0, -s)]
}

/// Cartesian Bloch matrix with its pieces kept apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochMatrix {
    pub k: Vec2,
    /// Bare emitter frequency (gamma); the other terms are offsets from it.
    pub omega_a: f64,
    pub zeeman: Mat2,
    /// g_pref g(k) / cell area, in gamma.
    pub interaction: Mat2,
}

impl BlochMatrix {
    /// M(k) - ω_A.
    pub fn offset(&self) -> Mat2 {
        add2(&self.zeeman, &self.interaction)
    }
}

/// Precomputed pieces shared by every k sample.
#[derive(Debug, Clone)]
pub struct BandContext {
    pub env: PhotonicEnv,
    pub mu_b: f64,
    pub omega_a: f64,
    /// g_pref / cell area.
    pub g_over_area: f64,
}

impl BandContext {
    pub fn new(params: &PhysicalParams, env: PhotonicEnv) -> Self {
        let s = params.scaled();
        Self { env, mu_b: s.mu_b, omega_a: s.omega_a, g_over_area: s.g_pref / s.cell_area }
    }

    /// Cone environment at the default regulator.
    pub fn cone(params: &PhysicalParams) -> Self {
        Self::new(params, PhotonicEnv::Cone(DiracConeModel::from_params(params)))
    }

    pub fn matrix(&self, k: Vec2) -> Result<BlochMatrix> {
        let g = momentum_greens(k, &self.env)?;
        Ok(BlochMatrix {
            k,
            omega_a: self.omega_a,
            zeeman: zeeman_cartesian(self.mu_b),
            interaction: scale2(&g.m, C64::new(self.g_over_area, 0.0)),
        })
    }

    fn model(&self) -> Option<&DiracConeModel> {
        match &self.env {
            PhotonicEnv::Cone(m) => Some(m),
            PhotonicEnv::Tabulated { .. } => None,
        }
    }

    /// Whether k lies inside a resonance ring of the cone model.
    pub fn inside_ring(&self, k: Vec2) -> Option<bool> {
        self.ring_offset(k).map(|d| d < 0.0)
    }

    /// (|k - valley| - q0)/q0 for the nearest valley.
    fn ring_offset(&self, k: Vec2) -> Option<f64> {
        self.model().map(|m| {
            let q0 = m.ring_radius();
            let q = Valley::BOTH.iter().map(|&v| norm(m.geometry.min_image(sub(k, m.valley(v))))).fold(f64::INFINITY, f64::min);
            (q - q0) / q0
        })
    }

    pub fn sample(&self, k: Vec2) -> Result<KSample> {
        let m = self.matrix(k)?;
        let (values, vectors) = eig2(&m.offset());
        let scale = values[0].norm().max(values[1].norm()).max(self.mu_b.abs()).max(1e-300);
        let ambiguous = (values[1] - values[0]).norm() < 1e-9 * scale;
        let labels = match self.ring_offset(k) {
            // on the ring itself the hybrid eigenvalue may carry any real part;
            // it is the one that diverges
            Some(d) if d.abs() < RING_SHELL => {
                let hybrid = if values[0].norm() > values[1].norm() { 0 } else { 1 };
                let side = if d < 0.0 { BandLabel::Lower } else { BandLabel::Upper };
                let mut l = [BandLabel::Middle; 2];
                l[hybrid] = side;
                l
            }
            Some(d) if d < 0.0 => [BandLabel::Lower, BandLabel::Middle],
            Some(_) => [BandLabel::Middle, BandLabel::Upper],
            None => [BandLabel::Unassigned, BandLabel::Unassigned],
        };
        let resonant = self.ring_offset(k).is_some_and(|d| d.abs() < RESONANT_SHELL);
        Ok(KSample { k, values, vectors, labels, ambiguous, resonant })
    }
}

/// Relative shell around a resonance ring in which the hybrid state is
/// identified by its divergent magnitude instead of by energy order.
const RING_SHELL: f64 = 0.02;

/// Within this relative distance of a ring the regulator dominates the hybrid
/// eigenvalue; such samples are flagged and kept out of the band extremes.
const RESONANT_SHELL: f64 = 1e-3;

pub fn bloch_matrix(k: Vec2, mu_b: f64, params: &PhysicalParams, env: &PhotonicEnv) -> Result<BlochMatrix> {
    let ctx = BandContext { mu_b, ..BandContext::new(params, env.clone()) };
    ctx.matrix(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BandLabel {
    Lower,
    Middle,
    Upper,
    /// Not yet placed (tabulated input before the window census).
    Unassigned,
}

impl BandLabel {
    pub fn index(self) -> usize {
        match self {
            BandLabel::Lower => 0,
            BandLabel::Middle => 1,
            BandLabel::Upper => 2,
            BandLabel::Unassigned => 3,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            BandLabel::Lower => "lower",
            BandLabel::Middle => "middle",
            BandLabel::Upper => "upper",
            BandLabel::Unassigned => "unassigned",
        }
    }
}

/// Eigenpairs at one k, ordered by real part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSample {
    pub k: Vec2,
    /// (ω - ω_A)/γ.
    pub values: [C64; 2],
    /// Unit right eigenvectors (Cartesian).
    pub vectors: [[C64; 2]; 2],
    pub labels: [BandLabel; 2],
    /// Eigenvalues too close to order reliably.
    pub ambiguous: bool,
    /// On a resonance ring (within the regulator's reach).
    pub resonant: bool,
}

impl KSample {
    pub fn of(&self, label: BandLabel) -> Option<(C64, [C64; 2])> {
        (0..2).find(|&i| self.labels[i] == label).map(|i| (self.values[i], self.vectors[i]))
    }
}

/// Extremes of the three bands; the gaps lie between them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandWindows {
    pub lower_max: f64,
    pub middle_min: f64,
    pub middle_max: f64,
    pub upper_min: f64,
}

impl BandWindows {
    pub fn gap_lower(&self) -> f64 {
        self.middle_min - self.lower_max
    }
    pub fn gap_upper(&self) -> f64 {
        self.upper_min - self.middle_max
    }
    /// Smaller of the two indirect gaps.
    pub fn gap(&self) -> f64 {
        self.gap_lower().min(self.gap_upper())
    }
    pub fn is_open(&self) -> bool {
        self.gap() > 0.0
    }

    pub fn from_samples(samples: &[KSample]) -> Result<Self> {
        let mut w = BandWindows {
            lower_max: f64::NEG_INFINITY,
            middle_min: f64::INFINITY,
            middle_max: f64::NEG_INFINITY,
            upper_min: f64::INFINITY,
        };
        for s in samples {
            for i in 0..2 {
                let e = s.values[i].re;
                if s.resonant && s.labels[i] != BandLabel::Middle {
                    continue;
                }
                match s.labels[i] {
                    BandLabel::Lower => w.lower_max = w.lower_max.max(e),
                    BandLabel::Middle => {
                        w.middle_min = w.middle_min.min(e);
                        w.middle_max = w.middle_max.max(e);
                    }
                    BandLabel::Upper => w.upper_min = w.upper_min.min(e),
                    BandLabel::Unassigned => {
                        return Err(Error::Domain("band windows need labelled samples".into()));
                    }
                }
            }
        }
        if !w.middle_min.is_finite() || !w.lower_max.is_finite() || !w.upper_min.is_finite() {
            return Err(Error::Domain("sampling does not reach all three bands".into()));
        }
        Ok(w)
    }
}

/// Label samples from the spectrum alone: the lower gap is the widest gap
/// among the per-k lower eigenvalues, the upper gap the widest among the
/// per-k upper ones. Gaps are compared after an asinh compression at the
/// median magnitude so that sparsely sampled divergent tails near a resonance
/// do not masquerade as gaps.
pub fn census_labels(samples: &mut [KSample]) -> Result<()> {
    fn widest(mut v: Vec<f64>) -> Option<(f64, f64)> {
        v.sort_by(f64::total_cmp);
        let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
        mags.sort_by(f64::total_cmp);
        let scale = mags.get(mags.len() / 2).copied().unwrap_or(1.0).max(1e-300);
        let c = |x: f64| (x / scale).asinh();
        v.windows(2).max_by(|a, b| (c(a[1]) - c(a[0])).total_cmp(&(c(b[1]) - c(b[0])))).map(|w| (w[0], w[1]))
    }
    let lo = widest(samples.iter().map(|s| s.values[0].re).collect());
    let hi = widest(samples.iter().map(|s| s.values[1].re).collect());
    let (Some((_, mid_lo)), Some((mid_hi, _))) = (lo, hi) else {
        return Err(Error::Domain("census needs at least two samples".into()));
    };
    for s in samples.iter_mut() {
        s.labels = if s.values[0].re < mid_lo {
            [BandLabel::Lower, BandLabel::Middle]
        } else if s.values[1].re > mid_hi {
            [BandLabel::Middle, BandLabel::Upper]
        } else {
            s.ambiguous = true;
            [BandLabel::Middle, BandLabel::Upper]
        };
    }
    Ok(())
}

/// Tensor-product grid over the Brillouin-zone parallelogram, in fractional
/// reciprocal coordinates, graded towards the valley coordinates 1/3 and 2/3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BzGrid {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Base lines per direction.
    pub n: usize,
    /// Fine spacing as a fraction of the ring radius.
    pub fine_per_ring: f64,
    /// Radius (in ring radii) of the uniformly fine zone.
    pub fine_extent: f64,
    /// Shift of the whole grid in units of the local spacing.
    pub offset: f64,
}

impl GridSpec {
    pub fn new(n: usize) -> Self {
        Self { n, fine_per_ring: 8.0, fine_extent: 6.0, offset: 0.5 }
    }
}

impl BzGrid {
    pub fn uniform(n: usize, offset: f64) -> Self {
        let u: Vec<f64> = (0..n).map(|i| (i as f64 + offset) / n as f64).collect();
        Self { u1: u.clone(), u2: u }
    }

    pub fn graded(spec: &GridSpec, ring_radius: f64, geom: &LatticeGeometry) -> Result<Self> {
        if spec.n < 4 {
            return Err(Error::Domain("grid needs at least 4 lines per direction".into()));
        }
        let glen = norm(geom.g1);
        let coarse = 1.0 / spec.n as f64;
        let fine = (ring_radius / glen / spec.fine_per_ring).min(coarse);
        let zone = spec.fine_extent * ring_radius / glen;
        let spacing = |u: f64| {
            let d = [1.0 / 3.0, 2.0 / 3.0].iter().map(|c| (u - c).abs()).fold(f64::INFINITY, f64::min);
            (fine + 0.25 * (d - zone).max(0.0)).min(coarse)
        };
        let mut u = vec![0.0];
        loop {
            let last = *u.last().expect("non-empty");
            let next = last + spacing(last);
            if next >= 1.0 - 0.5 * spacing(next) {
                break;
            }
            u.push(next);
        }
        let total = *u.last().expect("non-empty") + spacing(*u.last().expect("non-empty"));
        let n = u.len();
        // shift by `offset` of the local spacing, keep strictly increasing in [0, 1)
        let mut v: Vec<f64> = (0..n)
            .map(|i| {
                let h = if i + 1 < n { u[i + 1] - u[i] } else { total - u[i] };
                (u[i] + spec.offset * h) / total
            })
            .collect();
        for x in v.iter_mut() {
            for c in [1.0 / 3.0, 2.0 / 3.0] {
                if (*x - c).abs() < 1e-12 {
                    *x += 0.25 * fine;
                }
            }
        }
        v.sort_by(f64::total_cmp);
        Ok(Self { u1: v.clone(), u2: v })
    }

    pub fn k(&self, geom: &LatticeGeometry, i: usize, j: usize) -> Vec2 {
        self.point(geom, self.u1[i], self.u2[j])
    }

    pub fn point(&self, geom: &LatticeGeometry, a: f64, b: f64) -> Vec2 {
        [a * geom.g1[0] + b * geom.g2[0], a * geom.g1[1] + b * geom.g2[1]]
    }

    /// Fractional coordinate of line i+1 with periodic wrap.
    pub fn next1(&self, i: usize) -> f64 {
        if i + 1 < self.u1.len() {
            self.u1[i + 1]
        } else {
            self.u1[0] + 1.0
        }
    }
    pub fn next2(&self, j: usize) -> f64 {
        if j + 1 < self.u2.len() {
            self.u2[j + 1]
        } else {
            self.u2[0] + 1.0
        }
    }

    pub fn len(&self) -> usize {
        self.u1.len() * self.u2.len()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Insert the midpoints of the given intervals (by left index).
    pub fn refine(&mut self, cols: &[usize], rows: &[usize]) {
        let mut add1: Vec<f64> = cols.iter().map(|&i| 0.5 * (self.u1[i] + self.next1(i))).map(|x| x.rem_euclid(1.0)).collect();
        let mut add2v: Vec<f64> = rows.iter().map(|&j| 0.5 * (self.u2[j] + self.next2(j))).map(|x| x.rem_euclid(1.0)).collect();
        self.u1.append(&mut add1);
        self.u2.append(&mut add2v);
        for v in [&mut self.u1, &mut self.u2] {
            v.sort_by(f64::total_cmp);
            v.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        }
    }
}

/// How to sample k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KSampling {
    Path(Vec<Vec2>),
    Grid(GridSpec),
    /// Exactly the points of a tabulated environment.
    Tabulated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandResult {
    pub samples: Vec<KSample>,
    pub windows: Option<BandWindows>,
    /// Middle-band Re ω spread divided by the gap.
    pub flatness: Option<f64>,
    /// Mean |<σ−|u>|² over the middle band. The middle band is σ− far from
    /// the valleys and σ+ at them (band inversion), so this is below one.
    pub middle_polarization: Option<f64>,
    pub ambiguous: usize,
}

/// Graded grid sample points (fractional coordinates, flattened row-major).
pub fn grid_points(grid: &BzGrid, geom: &LatticeGeometry) -> Vec<Vec2> {
    let mut out = Vec::with_capacity(grid.len());
    for i in 0..grid.u1.len() {
        for j in 0..grid.u2.len() {
            out.push(grid.k(geom, i, j));
        }
    }
    out
}

pub fn sample_points(ctx: &BandContext, ks: &[Vec2]) -> Result<Vec<KSample>> {
    ks.par_iter().map(|&k| ctx.sample(k)).collect()
}

pub fn band_structure(sampling: &KSampling, ctx: &BandContext) -> Result<BandResult> {
    let ks: Vec<Vec2> = match sampling {
        KSampling::Path(p) => p.clone(),
        KSampling::Grid(spec) => {
            let m = ctx.model().ok_or_else(|| Error::Domain("grid sampling needs the analytic cone environment".into()))?;
            let mut ks = grid_points(&BzGrid::graded(spec, m.ring_radius(), &m.geometry)?, &m.geometry);
            // the valley points themselves bound the lower band
            ks.extend(Valley::BOTH.iter().map(|&v| m.valley(v)));
            ks
        }
        KSampling::Tabulated => match &ctx.env {
            PhotonicEnv::Tabulated { bands, .. } => bands.k.clone(),
            PhotonicEnv::Cone(_) => return Err(Error::Domain("tabulated sampling needs a tabulated environment".into())),
        },
    };
    if ks.is_empty() {
        return Err(Error::Domain("no k samples".into()));
    }
    let mut samples = sample_points(ctx, &ks)?;
    if ctx.model().is_none() {
        census_labels(&mut samples)?;
    }
    let windows = BandWindows::from_samples(&samples).ok();
    let flatness = windows.filter(|w| w.is_open()).map(|w| (w.middle_max - w.middle_min) / w.gap());
    let sm = sigma_minus();
    let overlaps: Vec<f64> = samples
        .iter()
        .filter_map(|s| s.of(BandLabel::Middle))
        .map(|(_, v)| (sm[0].conj() * v[0] + sm[1].conj() * v[1]).norm_sqr())
        .collect();
    let middle_polarization = (!overlaps.is_empty()).then(|| overlaps.iter().sum::<f64>() / overlaps.len() as f64);
    let ambiguous = samples.iter().filter(|s| s.ambiguous).count();
    Ok(BandResult { samples, windows, flatness, middle_polarization, ambiguous })
}

/// Gap on a graded grid, doubling the base resolution until it moves < 1%.
pub fn converged_gap(ctx: &BandContext, n0: usize, n_max: usize) -> Result<(BandWindows, usize)> {
    let mut n = n0;
    let mut prev: Option<BandWindows> = None;
    loop {
        let w = band_structure(&KSampling::Grid(GridSpec::new(n)), ctx)?
            .windows
            .ok_or_else(|| Error::Domain("band windows undefined".into()))?;
        if let Some(p) = prev {
            let g = w.gap().max(0.0);
            let gp = p.gap().max(0.0);
            if (g - gp).abs() <= 0.01 * g.abs().max(gp.abs()) || (g == 0.0 && gp == 0.0) {
                return Ok((w, n));
            }
        }
        if n >= n_max {
            return Err(Error::Numerical(format!("gap not converged at grid size {n}")));
        }
        prev = Some(w);
        n *= 2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub mu_b: f64,
    /// Δ in gamma; zero when the windows overlap.
    pub gap: f64,
    pub gap_lower: f64,
    pub gap_upper: f64,
    pub grid_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
    /// dΔ/d(μB) over the rows with Δ below half the plateau.
    pub linear_slope: Option<f64>,
    pub gap_max: f64,
    pub monotone: bool,
    /// Last rows agree within 2%.
    pub plateau_reached: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub n0: usize,
    pub n_max: usize,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { n0: 24, n_max: 384 }
    }
}

fn gap_row(params: &PhysicalParams, env: &PhotonicEnv, mu_b: f64, opts: &ScanOptions) -> Result<GapRow> {
    let ctx = BandContext { mu_b, ..BandContext::new(params, env.clone()) };
    if mu_b == 0.0 {
        // degenerate at the valley points: the windows touch
        let w = band_structure(&KSampling::Grid(GridSpec::new(opts.n0)), &ctx)?.windows;
        let (gl, gu) = w.map(|w| (w.gap_lower(), w.gap_upper())).unwrap_or((0.0, 0.0));
        return Ok(GapRow { mu_b, gap: gl.min(gu).max(0.0), gap_lower: gl, gap_upper: gu, grid_n: opts.n0 });
    }
    let (w, n) = converged_gap(&ctx, opts.n0, opts.n_max)?;
    Ok(GapRow { mu_b, gap: w.gap().max(0.0), gap_lower: w.gap_lower(), gap_upper: w.gap_upper(), grid_n: n })
}

pub fn gap_vs_field(mu_list: &[f64], params: &PhysicalParams, env: &PhotonicEnv, opts: &ScanOptions) -> Result<GapTable> {
    if mu_list.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || mu_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("field list must be non-negative and strictly ascending".into()));
    }
    let rows: Vec<GapRow> = mu_list.iter().map(|&m| gap_row(params, env, m, opts)).collect::<Result<_>>()?;
    Ok(summarize(rows))
}

fn summarize(rows: Vec<GapRow>) -> GapTable {
    let gap_max = rows.iter().map(|r| r.gap).fold(0.0, f64::max);
    let monotone = rows.windows(2).all(|w| w[1].gap >= w[0].gap * (1.0 - 1e-3));
    let lin: Vec<&GapRow> = rows.iter().filter(|r| r.mu_b > 0.0 && r.gap < 0.5 * gap_max).collect();
    let linear_slope = if lin.len() >= 2 {
        let n = lin.len() as f64;
        let mx = lin.iter().map(|r| r.mu_b).sum::<f64>() / n;
        let my = lin.iter().map(|r| r.gap).sum::<f64>() / n;
        let sxy: f64 = lin.iter().map(|r| (r.mu_b - mx) * (r.gap - my)).sum();
        let sxx: f64 = lin.iter().map(|r| (r.mu_b - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let plateau_reached = rows.len() >= 3 && {
        let tail = &rows[rows.len() - 3..];
        let lo = tail.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
        let hi = tail.iter().map(|r| r.gap).fold(0.0, f64::max);
        hi > 0.0 && (hi - lo) <= 0.02 * hi
    };
    GapTable { rows, linear_slope, gap_max, monotone, plateau_reached }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningRow {
    /// δ_A / 2π in THz.
    pub delta_thz: f64,
    pub gap_max: f64,
    /// μB at which the plateau was declared.
    pub mu_b_at_plateau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningTable {
    pub rows: Vec<DetuningRow>,
    /// Log-log slope of Δ_max against δ_A.
    pub exponent: Option<f64>,
}

/// Plateau Δ_max: geometric field sweep until the gap grows by < 1%.
pub fn gap_plateau(params: &PhysicalParams, opts: &ScanOptions) -> Result<(f64, f64, GapTable)> {
    let env = PhotonicEnv::Cone(DiracConeModel::from_params(params));
    // a field well inside the linear regime to start from
    let mut mu = 0.25 * params.scaled().coupling.max(1e-6);
    let mut rows = Vec::new();
    for _ in 0..80 {
        let r = gap_row(params, &env, mu, opts)?;
        rows.push(r);
        let n = rows.len();
        if n >= 3 {
            let (a, b, c) = (rows[n - 3].gap, rows[n - 2].gap, rows[n - 1].gap);
            if c > 0.0 && (c - b).abs() <= 0.01 * c && (b - a).abs() <= 0.01 * c {
                let table = summarize(rows);
                return Ok((c, mu, table));
            }
        }
        mu *= 2.0;
    }
    Err(Error::Numerical("no gap plateau found".into()))
}

pub fn max_gap_vs_detuning(delta_thz: &[f64], params: &PhysicalParams, opts: &ScanOptions) -> Result<DetuningTable> {
    if delta_thz.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::Domain("detunings must be positive".into()));
    }
    let rows: Vec<DetuningRow> = delta_thz
        .iter()
        .map(|&d| {
            let p = params.with_delta_a(2.0 * std::f64::consts::PI * 1e12 * d)?;
            let (g, mu, _) = gap_plateau(&p, opts)?;
            Ok(DetuningRow { delta_thz: d, gap_max: g, mu_b_at_plateau: mu })
        })
        .collect::<Result<_>>()?;
    let exponent = log_log_slope(&rows.iter().map(|r| (r.delta_thz, r.gap_max)).collect::<Vec<_>>());
    Ok(DetuningTable { rows, exponent })
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    let v: Vec<(f64, f64)> = pts.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mx = v.iter().map(|p| p.0).sum::<f64>() / n;
    let my = v.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = v.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = v.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}
