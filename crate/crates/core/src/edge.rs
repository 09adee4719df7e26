//! Stripe (ribbon) spectra: edge-state classification, resonance and
//! light-cone tags, group velocities and hop counts.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use faer::Mat;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bands::zeeman_cartesian;
use crate::env::DiracConeModel;
use crate::error::{Error, Result};
use crate::greens::{mixed_greens_many, ContourMethod, ContourSpec, Orientation, StripeFrame};
use crate::lattice::{GreensMatrix, Valley};
use crate::linalg::eig_dense;
use crate::units::PhysicalParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripeConfig {
    pub orientation: Orientation,
    /// Emitters across the stripe.
    pub m: usize,
    /// Longitudinal quasi-momenta (1/a), inside the 1-D zone.
    pub k: Vec<f64>,
    pub mu_b: f64,
    /// Edge columns inspected on each side.
    pub columns: usize,
    /// Required weight ratio between the two edges.
    pub ratio: f64,
    pub contour: ContourMethod,
}

impl StripeConfig {
    pub fn new(orientation: Orientation, m: usize, k: Vec<f64>, mu_b: f64) -> Self {
        Self { orientation, m, k, mu_b, columns: 5, ratio: 5.0, contour: ContourMethod::Deformed }
    }

    /// Uniform k grid across the whole 1-D zone (endpoints excluded).
    pub fn uniform_k(orientation: Orientation, n: usize) -> Vec<f64> {
        let h = StripeFrame::new(orientation).bz_half_width();
        (0..n).map(|i| -h + 2.0 * h * (i as f64 + 0.5) / n as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns == 0 || self.m < 7 {
            return Err(Error::Config(format!("stripe needs m >= 7 and room for {} edge columns, got m = {}", self.columns, self.m)));
        }
        if !(self.ratio.is_finite() && self.ratio >= 1.0) {
            return Err(Error::Config(format!("edge ratio must be >= 1, got {}", self.ratio)));
        }
        if !self.mu_b.is_finite() {
            return Err(Error::Config("mu_b must be finite".into()));
        }
        let h = StripeFrame::new(self.orientation).bz_half_width();
        if let Some(k) = self.k.iter().find(|k| !(k.abs() <= h * (1.0 + 1e-12))) {
            return Err(Error::Domain(format!("k = {k} outside the 1-D zone ±{h}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeClass {
    Left,
    Right,
    Bulk,
}

impl EdgeClass {
    pub fn name(self) -> &'static str {
        match self {
            EdgeClass::Left => "left",
            EdgeClass::Right => "right",
            EdgeClass::Bulk => "bulk",
        }
    }
}

/// Free-space tags added by [`lifetime_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lifetime {
    pub in_light_cone: bool,
    /// linewidth + Γ0 inside the light cone (gamma).
    pub decay: f64,
    /// Sites travelled before decaying, |v_g| / decay.
    pub hops: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    pub k_index: usize,
    pub k: f64,
    /// Complex frequency offset from ω_A (gamma).
    pub omega: C64,
    /// Row-major (b, polarisation) amplitudes, unit norm.
    pub profile: Vec<C64>,
    pub class: EdgeClass,
    pub in_resonance: bool,
    /// −2 Im ω.
    pub linewidth: f64,
    /// dRe ω/dk in a·gamma.
    pub v_g: f64,
    pub lifetime: Option<Lifetime>,
}

impl EdgeState {
    /// |c_b|² summed over polarisation, per emitter row.
    pub fn row_weights(&self) -> Vec<f64> {
        self.profile.chunks(2).map(|c| c[0].norm_sqr() + c[1].norm_sqr()).collect()
    }
}

/// Mixed Green's function values per k, shared across threads.
///
/// Inserts are idempotent: racing writers store identical values.
#[derive(Default)]
pub struct GreensCache {
    map: RwLock<HashMap<u64, Arc<Vec<GreensMatrix>>>>,
}

impl GreensCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.read().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// g(k; j·row_spacing) for j = −(m−1)..=(m−1), index j + m − 1.
    fn column(&self, k: f64, m: usize, frame: &StripeFrame, model: &DiracConeModel, method: ContourMethod) -> Result<Arc<Vec<GreensMatrix>>> {
        let key = k.to_bits() ^ ((m as u64) << 48) ^ ((method == ContourMethod::RealAxis) as u64) << 63;
        if let Some(v) = self.map.read().ok().and_then(|m| m.get(&key).cloned()) {
            return Ok(v);
        }
        let xs: Vec<f64> = (0..2 * m - 1).map(|i| (i as f64 - (m as f64 - 1.0)) * frame.row_spacing).collect();
        let values = Arc::new(evaluate(k, &xs, frame, model, method)?);
        if let Ok(mut map) = self.map.write() {
            map.entry(key).or_insert_with(|| values.clone());
        }
        Ok(values)
    }
}

fn evaluate(k: f64, xs: &[f64], frame: &StripeFrame, model: &DiracConeModel, method: ContourMethod) -> Result<Vec<GreensMatrix>> {
    match method {
        ContourMethod::RealAxis => mixed_greens_many(k, xs, frame, model, &ContourSpec::real_axis(model)),
        // a pole sitting on the split point defeats the detour; the real axis copes
        ContourMethod::Deformed => mixed_greens_many(k, xs, frame, model, &ContourSpec::deformed())
            .or_else(|_| mixed_greens_many(k, xs, frame, model, &ContourSpec::real_axis(model))),
    }
}

/// The 2m×2m stripe matrix at longitudinal momentum k (gamma, offset ω_A).
pub fn stripe_matrix(k: f64, cfg: &StripeConfig, params: &PhysicalParams) -> Result<Mat<C64>> {
    stripe_matrix_cached(k, cfg, params, &GreensCache::new())
}

pub fn stripe_matrix_cached(k: f64, cfg: &StripeConfig, params: &PhysicalParams, cache: &GreensCache) -> Result<Mat<C64>> {
    let frame = StripeFrame::new(cfg.orientation);
    let model = DiracConeModel::from_params(params);
    let col = cache.column(k, cfg.m, &frame, &model, cfg.contour)?;
    Ok(assemble(k, cfg, &frame, params.scaled().g_pref, &col))
}

fn assemble(k: f64, cfg: &StripeConfig, frame: &StripeFrame, g_pref: f64, col: &[GreensMatrix]) -> Mat<C64> {
    let m = cfg.m;
    let z = zeeman_cartesian(cfg.mu_b);
    let scale = g_pref / frame.period;
    Mat::from_fn(2 * m, 2 * m, |r, c| {
        let (b, al) = (r / 2, r % 2);
        let (bp, be) = (c / 2, c % 2);
        let g = &col[b + m - 1 - bp].m;
        let dl = frame.site(b).1 - frame.site(bp).1;
        let mut v = g[al][be] * C64::from_polar(scale, k * dl);
        if b == bp {
            v += z[al][be];
        }
        v
    })
}

/// The 5-column rule: left if the leftmost columns carry `ratio` times the
/// weight of the rightmost ones, right for the mirror case, bulk otherwise.
pub fn classify(weights: &[f64], columns: usize, ratio: f64) -> EdgeClass {
    let n = weights.len();
    let c = columns.min(n / 2);
    let left: f64 = weights[..c].iter().sum();
    let right: f64 = weights[n - c..].iter().sum();
    if left > ratio * right {
        EdgeClass::Left
    } else if right > ratio * left {
        EdgeClass::Right
    } else {
        EdgeClass::Bulk
    }
}

/// Whether k is within q0 of a valley projection.
pub fn in_resonance_window(k: f64, frame: &StripeFrame, model: &DiracConeModel) -> bool {
    let q0 = model.ring_radius();
    Valley::BOTH.iter().any(|&v| frame.valley_column(k, model.valley(v)).0.abs() < q0)
}

/// Full spectrum at every configured k, sorted by Re ω within each k.
pub fn edge_spectrum(cfg: &StripeConfig, params: &PhysicalParams) -> Result<Vec<EdgeState>> {
    edge_spectrum_cached(cfg, params, &GreensCache::new())
}

pub fn edge_spectrum_cached(cfg: &StripeConfig, params: &PhysicalParams, cache: &GreensCache) -> Result<Vec<EdgeState>> {
    cfg.validate()?;
    let frame = StripeFrame::new(cfg.orientation);
    let model = DiracConeModel::from_params(params);
    let g_pref = params.scaled().g_pref;
    let per_k: Vec<Vec<EdgeState>> = cfg
        .k
        .par_iter()
        .enumerate()
        .map(|(ki, &k)| {
            let col = cache.column(k, cfg.m, &frame, &model, cfg.contour)?;
            let eig = eig_dense(&assemble(k, cfg, &frame, g_pref, &col))?;
            let resonant = in_resonance_window(k, &frame, &model);
            let mut states: Vec<EdgeState> = (0..eig.values.len())
                .map(|j| {
                    let profile: Vec<C64> = eig.vectors.col(j).iter().copied().collect();
                    let mut s = EdgeState {
                        k_index: ki,
                        k,
                        omega: eig.values[j],
                        profile,
                        class: EdgeClass::Bulk,
                        in_resonance: resonant,
                        linewidth: -2.0 * eig.values[j].im,
                        v_g: f64::NAN,
                        lifetime: None,
                    };
                    s.class = classify(&s.row_weights(), cfg.columns, cfg.ratio);
                    s
                })
                .collect();
            states.sort_by(|a, b| a.omega.re.total_cmp(&b.omega.re));
            Ok(states)
        })
        .collect::<Result<_>>()?;
    let v = group_velocities(&cfg.k, &per_k);
    Ok(per_k
        .into_iter()
        .zip(v)
        .flat_map(|(states, vs)| {
            states.into_iter().zip(vs).map(|(mut s, v)| {
                s.v_g = v;
                s
            })
        })
        .collect())
}

fn overlap(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>().norm()
}

fn best_match(s: &EdgeState, others: &[EdgeState]) -> usize {
    let mut best = (0, -1.0);
    for (i, o) in others.iter().enumerate() {
        let w = overlap(&s.profile, &o.profile);
        if w > best.1 {
            best = (i, w);
        }
    }
    best.0
}

/// Centered differences along k, following each state to its
/// largest-overlap partner at the neighbouring k values.
fn group_velocities(ks: &[f64], per_k: &[Vec<EdgeState>]) -> Vec<Vec<f64>> {
    let n = ks.len();
    (0..n)
        .map(|i| {
            per_k[i]
                .iter()
                .map(|s| {
                    if n < 2 {
                        return f64::NAN;
                    }
                    let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
                    let e_lo = if lo == i { s.omega.re } else { per_k[lo][best_match(s, &per_k[lo])].omega.re };
                    let e_hi = if hi == i { s.omega.re } else { per_k[hi][best_match(s, &per_k[hi])].omega.re };
                    (e_hi - e_lo) / (ks[hi] - ks[lo])
                })
                .collect()
        })
        .collect()
}

/// Tag free-space coupling: inside the light cone a state also decays at Γ0.
pub fn lifetime_report(states: &mut [EdgeState], params: &PhysicalParams) {
    let s = params.scaled();
    for st in states.iter_mut() {
        let in_cone = st.k.abs() < s.light_cone_radius;
        let decay = st.linewidth.max(0.0) + if in_cone { s.gamma_0 } else { 0.0 };
        let hops = if decay > 0.0 { st.v_g.abs() / decay } else { f64::INFINITY };
        st.lifetime = Some(Lifetime { in_light_cone: in_cone, decay, hops });
    }
}

/// Bulk gap inferred from the stripe: the in-gap window between the two
/// flat bulk bands at each k. Returns (lower bulk top, upper bulk bottom).
pub fn bulk_edges(states: &[EdgeState], mu_b: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for s in states.iter().filter(|s| s.class == EdgeClass::Bulk && !s.in_resonance) {
        let e = s.omega.re;
        if e.abs() < 2.0 * mu_b.abs() + 1.0 {
            if e < 0.0 {
                lo = lo.max(e);
            } else {
                hi = hi.min(e);
            }
        }
    }
    (lo, hi)
}
