//! One function per subcommand: resolve configuration, run, tabulate.

use std::collections::{BTreeMap, BTreeSet};

use dirac_lattice::bands::{band_structure, gap_vs_field, max_gap_vs_detuning, BandContext, GridSpec, KSampling, ScanOptions};
use dirac_lattice::dynamics::{
    apply_disorder, assemble_hamiltonian, evolve, hexagon_lattice, markov_check, spectrum_report, transport_metrics, Disorder, DriveConfig,
    EvolveOptions, FillingMode, Propagator, SpectrumOptions,
};
use dirac_lattice::edge::{bulk_edges, edge_spectrum, lifetime_report, EdgeClass, StripeConfig};
use dirac_lattice::env::{load_tabulated, DiracConeModel, PhotonicEnv};
use dirac_lattice::greens::{ContourMethod, Orientation};
use dirac_lattice::io::{sha256_file, Table};
use dirac_lattice::topology::{berry_map, ChernSpec};
use dirac_lattice::units::{derive_params, ConfigExt, MODEL_DEFAULTS, MODEL_REQUIRED};
use dirac_lattice::{Config, Error, LatticeGeometry, Result};
use serde_json::{json, Value};

pub struct Outcome {
    pub tables: Vec<Table>,
    pub summary: Value,
    pub config: Config,
    pub inputs: BTreeMap<String, String>,
}

const BANDS_KEYS: &[(&str, &str)] =
    &[("sampling", "grid"), ("grid_n", "100"), ("path_points", "200"), ("scan", "none"), ("mu_list", ""), ("delta_list", ""), ("scan_n0", "24"), ("scan_n_max", "384")];
const CHERN_KEYS: &[(&str, &str)] = &[("grid_n", "100")];
const EDGE_KEYS: &[(&str, &str)] =
    &[("orientation", "x"), ("m", "41"), ("n_k", "120"), ("columns", "5"), ("ratio", "5"), ("contour", "deformed")];
const EVOLVE_KEYS: &[(&str, &str)] = &[
    ("mode", "dynamics"),
    ("shells", "22"),
    ("drive_n1", "-11"),
    ("drive_n2", "22"),
    ("rabi", "0.0059"),
    ("omega_l", "-0.37"),
    ("t0", "127.5"),
    ("ramp_sigma", "23.3"),
    ("t_end", "297.5"),
    ("snapshot_dt", "12.5"),
    ("extra_times", ""),
    ("filling", "1"),
    ("filling_mode", "bernoulli"),
    ("sigma_inh", "0"),
    ("free_space", "false"),
    ("depth", "1"),
    ("tol", "1e-6"),
];
const VALIDATE_KEYS: &[(&str, &str)] = &[("n_sites", "1519"), ("gap", "1"), ("lambda_edge", "1600"), ("threshold", "0.1")];
/// Model keys without defaults that are still allowed.
const MODEL_OPTIONAL: &[&str] = &["a_nm_override", "tabulated_file"];

/// Fill defaults and reject keys the subcommand does not know.
fn resolve(raw: &Config, own: &[(&str, &str)]) -> Result<Config> {
    let known: BTreeSet<&str> = MODEL_DEFAULTS
        .iter()
        .chain(own)
        .map(|(k, _)| *k)
        .chain(MODEL_REQUIRED.iter().copied())
        .chain(MODEL_OPTIONAL.iter().copied())
        .chain(["seed"])
        .collect();
    if let Some(bad) = raw.keys().find(|k| !known.contains(k.as_str())) {
        return Err(Error::Config(format!("unknown key `{bad}`")));
    }
    let mut out = raw.clone();
    for (k, v) in MODEL_DEFAULTS.iter().chain(own) {
        if !v.is_empty() {
            out.entry((*k).to_string()).or_insert_with(|| (*v).to_string());
        }
    }
    Ok(out)
}

fn list(cfg: &Config, key: &str) -> Result<Vec<f64>> {
    match cfg.get_str(key) {
        None => Ok(Vec::new()),
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Config(format!("`{key}`: bad number `{t}`"))))
            .collect(),
    }
}

fn choice<'a>(cfg: &'a Config, key: &str, allowed: &[&str]) -> Result<&'a str> {
    let v = cfg.get_str(key).unwrap_or("");
    if allowed.contains(&v) {
        Ok(v)
    } else {
        Err(Error::Config(format!("`{key}` must be one of {allowed:?}, got `{v}`")))
    }
}

fn flag(cfg: &Config, key: &str) -> Result<bool> {
    match choice(cfg, key, &["true", "false"])? {
        "true" => Ok(true),
        _ => Ok(false),
    }
}

fn environment(cfg: &Config, params: &dirac_lattice::PhysicalParams, inputs: &mut BTreeMap<String, String>) -> Result<PhotonicEnv> {
    match cfg.get_str("tabulated_file") {
        Some(path) => {
            inputs.insert(path.to_string(), sha256_file(path)?);
            Ok(PhotonicEnv::tabulated(load_tabulated(path)?, params))
        }
        None => Ok(PhotonicEnv::Cone(DiracConeModel::from_params(params))),
    }
}

/// Γ → K → M → Γ with points spread by length.
fn high_symmetry_path(geom: &LatticeGeometry, n: usize) -> Vec<[f64; 2]> {
    let m = [0.5 * geom.g1[0], 0.5 * geom.g1[1]];
    let corners = [[0.0, 0.0], geom.pk, m, [0.0, 0.0]];
    let lens: Vec<f64> = corners.windows(2).map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt()).collect();
    let total: f64 = lens.iter().sum();
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let mut s = total * i as f64 / (n - 1) as f64;
            let mut seg = 0;
            while seg + 1 < lens.len() && s > lens[seg] {
                s -= lens[seg];
                seg += 1;
            }
            let f = (s / lens[seg]).min(1.0);
            let (a, b) = (corners[seg], corners[seg + 1]);
            [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
        })
        .collect()
}

pub fn bands(raw: &Config) -> Result<Outcome> {
    let cfg = resolve(raw, BANDS_KEYS)?;
    let params = derive_params(&cfg)?;
    let mut inputs = BTreeMap::new();
    let env = environment(&cfg, &params, &mut inputs)?;
    let opts = ScanOptions { n0: cfg.usize_or("scan_n0", 24)?, n_max: cfg.usize_or("scan_n_max", 384)? };
    match choice(&cfg, "scan", &["none", "field", "detuning"])? {
        "field" => {
            let mus = list(&cfg, "mu_list")?;
            let t = gap_vs_field(&mus, &params, &env, &opts)?;
            let mut table = Table::new("gap_field", &[("mu_b", "gamma"), ("gap", "gamma"), ("gap_lower", "gamma"), ("gap_upper", "gamma"), ("grid_n", "-")]);
            for r in &t.rows {
                table.push(vec![r.mu_b.into(), r.gap.into(), r.gap_lower.into(), r.gap_upper.into(), r.grid_n.into()]);
            }
            let summary = json!({"linear_slope": t.linear_slope, "gap_max": t.gap_max, "monotone": t.monotone, "plateau_reached": t.plateau_reached});
            return Ok(Outcome { tables: vec![table], summary, config: cfg, inputs });
        }
        "detuning" => {
            let ds = list(&cfg, "delta_list")?;
            let t = max_gap_vs_detuning(&ds, &params, &opts)?;
            let mut table = Table::new("gap_detuning", &[("delta_a_over_2pi", "THz"), ("gap_max", "gamma"), ("mu_b_at_plateau", "gamma")]);
            for r in &t.rows {
                table.push(vec![r.delta_thz.into(), r.gap_max.into(), r.mu_b_at_plateau.into()]);
            }
            return Ok(Outcome { tables: vec![table], summary: json!({"exponent": t.exponent}), config: cfg, inputs });
        }
        _ => {}
    }
    let ctx = BandContext::new(&params, env);
    let geom = LatticeGeometry::new(params.scaled().wavelength);
    let sampling = match choice(&cfg, "sampling", &["grid", "path", "tabulated"])? {
        "grid" => KSampling::Grid(GridSpec::new(cfg.usize_or("grid_n", 100)?)),
        "path" => KSampling::Path(high_symmetry_path(&geom, cfg.usize_or("path_points", 200)?)),
        _ => KSampling::Tabulated,
    };
    let res = band_structure(&sampling, &ctx)?;
    let mut table = Table::new(
        "bands",
        &[("kx", "1/a"), ("ky", "1/a"), ("band", "-"), ("omega_re", "gamma"), ("omega_im", "gamma"), ("ambiguous", "-")],
    );
    for s in &res.samples {
        for i in 0..2 {
            table.push(vec![s.k[0].into(), s.k[1].into(), s.labels[i].name().into(), s.values[i].re.into(), s.values[i].im.into(), s.ambiguous.into()]);
        }
    }
    let summary = json!({
        "samples": res.samples.len(),
        "windows": res.windows,
        "gap": res.windows.map(|w| w.gap()),
        "flatness": res.flatness,
        "middle_polarization": res.middle_polarization,
        "ambiguous": res.ambiguous,
    });
    Ok(Outcome { tables: vec![table], summary, config: cfg, inputs })
}

pub fn chern(raw: &Config) -> Result<Outcome> {
    let cfg = resolve(raw, CHERN_KEYS)?;
    let params = derive_params(&cfg)?;
    let mut inputs = BTreeMap::new();
    let env = environment(&cfg, &params, &mut inputs)?;
    let ctx = BandContext::new(&params, env);
    let grid = berry_map(&ChernSpec::new(cfg.usize_or("grid_n", 100)?), &ctx)?;
    let mut table = Table::new(
        "berry",
        &[("kx", "1/a"), ("ky", "1/a"), ("area", "1/a^2"), ("flux_lower", "rad"), ("flux_middle", "rad"), ("flux_upper", "rad")],
    );
    for p in &grid.plaquettes {
        table.push(vec![p.center[0].into(), p.center[1].into(), p.area.into(), p.flux[0].into(), p.flux[1].into(), p.flux[2].into()]);
    }
    let summary = json!({
        "chern": grid.chern,
        "raw": grid.raw,
        "sum": grid.chern_sum(),
        "windows": grid.windows,
        "passes": grid.passes,
        "plaquettes": grid.plaquettes.len(),
    });
    Ok(Outcome { tables: vec![table], summary, config: cfg, inputs })
}

pub fn edge(raw: &Config) -> Result<Outcome> {
    let cfg = resolve(raw, EDGE_KEYS)?;
    let params = derive_params(&cfg)?;
    let orientation = match choice(&cfg, "orientation", &["x", "y"])? {
        "x" => Orientation::X,
        _ => Orientation::Y,
    };
    let mut sc = StripeConfig::new(orientation, cfg.usize_or("m", 41)?, StripeConfig::uniform_k(orientation, cfg.usize_or("n_k", 120)?), params.mu_b());
    sc.columns = cfg.usize_or("columns", 5)?;
    sc.ratio = cfg.f64_or("ratio", 5.0)?;
    sc.contour = match choice(&cfg, "contour", &["deformed", "real_axis"])? {
        "deformed" => ContourMethod::Deformed,
        _ => ContourMethod::RealAxis,
    };
    sc.validate().map_err(|e| Error::Config(e.to_string()))?;
    let mut states = edge_spectrum(&sc, &params)?;
    lifetime_report(&mut states, &params);
    let mut table = Table::new(
        "edge",
        &[
            ("k", "1/a"),
            ("omega_re", "gamma"),
            ("omega_im", "gamma"),
            ("class", "-"),
            ("in_resonance", "-"),
            ("linewidth", "gamma"),
            ("v_g", "a*gamma"),
            ("in_light_cone", "-"),
            ("decay", "gamma"),
            ("hops", "sites"),
        ],
    );
    for s in &states {
        let lt = s.lifetime.unwrap_or(dirac_lattice::edge::Lifetime { in_light_cone: false, decay: f64::NAN, hops: f64::NAN });
        table.push(vec![
            s.k.into(),
            s.omega.re.into(),
            s.omega.im.into(),
            s.class.name().into(),
            s.in_resonance.into(),
            s.linewidth.into(),
            s.v_g.into(),
            lt.in_light_cone.into(),
            lt.decay.into(),
            lt.hops.into(),
        ]);
    }
    let (lo, hi) = bulk_edges(&states, params.mu_b());
    let count = |c: EdgeClass| states.iter().filter(|s| s.class == c && s.omega.re > lo && s.omega.re < hi).count();
    let summary = json!({
        "states": states.len(),
        "bulk_gap": [lo, hi],
        "in_gap_left": count(EdgeClass::Left),
        "in_gap_right": count(EdgeClass::Right),
        "in_gap_bulk": count(EdgeClass::Bulk),
    });
    Ok(Outcome { tables: vec![table], summary, config: cfg, inputs: BTreeMap::new() })
}

pub fn evolve_cmd(raw: &Config, seed: u64) -> Result<Outcome> {
    let cfg = resolve(raw, EVOLVE_KEYS)?;
    let params = derive_params(&cfg)?;
    let mu_b = params.mu_b();
    let base = hexagon_lattice(cfg.usize_or("shells", 22)?);
    let (n1, n2) = (cfg.req_f64("drive_n1")? as i64, cfg.req_f64("drive_n2")? as i64);
    let site = base.index_of(n1, n2).ok_or_else(|| Error::Config(format!("drive site ({n1}, {n2}) is outside the patch")))?;
    let filling = cfg.req_f64("filling")?;
    let sigma_inh = cfg.req_f64("sigma_inh")?;
    let mode = match choice(&cfg, "filling_mode", &["bernoulli", "exact"])? {
        "exact" => FillingMode::Exact,
        _ => FillingMode::Bernoulli,
    };
    let mut lattice = if filling < 1.0 || sigma_inh > 0.0 {
        apply_disorder(&base, Disorder { filling, sigma_inh, seed, mode }).map_err(|e| Error::Config(e.to_string()))?
    } else {
        base
    };
    // the laser needs an emitter to drive
    lattice.present[site] = true;
    let h = assemble_hamiltonian(&lattice, mu_b, &params, flag(&cfg, "free_space")?)?;
    if choice(&cfg, "mode", &["dynamics", "spectrum"])? == "spectrum" {
        let rep = spectrum_report(&h, &lattice, SpectrumOptions::for_field(mu_b))?;
        let mut table = Table::new("spectrum", &[("index", "-"), ("omega_re", "gamma"), ("omega_im", "gamma"), ("boundary_weight", "-"), ("class", "-")]);
        for (i, v) in rep.values.iter().enumerate() {
            table.push(vec![i.into(), v.re.into(), v.im.into(), rep.boundary_weight[i].into(), rep.classes[i].name().into()]);
        }
        let summary = json!({
            "sites": lattice.n_present(),
            "gap": rep.gap,
            "gap_width": rep.gap_width(),
            "in_gap": rep.in_gap,
            "in_gap_edge": rep.in_gap_edge,
        });
        return Ok(Outcome { tables: vec![table], summary, config: cfg, inputs: BTreeMap::new() });
    }
    let drive = DriveConfig { site, rabi: cfg.req_f64("rabi")?, omega_l: cfg.req_f64("omega_l")?, t0: cfg.req_f64("t0")?, sigma: cfg.req_f64("ramp_sigma")? };
    let (t_end, dt) = (cfg.req_f64("t_end")?, cfg.req_f64("snapshot_dt")?);
    if !(t_end > 0.0 && dt > 0.0) {
        return Err(Error::Config("t_end and snapshot_dt must be positive".into()));
    }
    let mut times: Vec<f64> = (0..).map(|i| i as f64 * dt).take_while(|t| *t < t_end - 1e-9).chain([t_end]).collect();
    times.extend(list(&cfg, "extra_times")?.into_iter().filter(|t| *t >= 0.0 && *t <= t_end));
    times.sort_by(f64::total_cmp);
    times.dedup();
    let prop = Propagator::new(&h)?;
    let opts = EvolveOptions { tol: cfg.req_f64("tol")?, ..Default::default() };
    let series = evolve(&prop, &lattice, Some(&drive), None, &times, opts)?;
    let depth = cfg.usize_or("depth", 1)?;
    let m = transport_metrics(&series, &lattice, site, depth);
    let depths = lattice.boundary_depth();
    let mut snaps = Table::new(
        "snapshots",
        &[("time", "1/gamma"), ("site", "-"), ("n1", "-"), ("n2", "-"), ("x", "a"), ("y", "a"), ("depth", "sites"), ("probability", "-")],
    );
    for (ti, p) in series.probs.iter().enumerate() {
        for (s, &i) in series.sites.iter().enumerate() {
            let (a, b) = lattice.coords[i];
            let r = lattice.positions[i];
            snaps.push(vec![times[ti].into(), i.into(), a.into(), b.into(), r[0].into(), r[1].into(), depths[s].into(), p[s].into()]);
        }
    }
    let mut metrics = Table::new(
        "metrics",
        &[("time", "1/gamma"), ("norm", "-"), ("boundary_fraction", "-"), ("centroid_angle", "rad"), ("chirality", "-"), ("arc", "rad")],
    );
    for i in 0..times.len() {
        let chi = if i == 0 { 0 } else { m.chirality[i - 1] as i64 };
        metrics.push(vec![times[i].into(), series.norm[i].into(), m.boundary_fraction[i].into(), m.centroid_angle[i].into(), chi.into(), m.arc[i].into()]);
    }
    let post: Vec<usize> = (1..times.len()).filter(|&i| times[i] >= drive.t0).collect();
    let summary = json!({
        "sites": lattice.n_present(),
        "drive_site": site,
        "step": series.step,
        "error_estimate": series.error_estimate,
        "arc_progress": m.arc_progress,
        "clockwise_after_ramp": post.iter().all(|&i| m.chirality[i - 1] < 0),
        "min_boundary_fraction_after_ramp": post.iter().map(|&i| m.boundary_fraction[i]).fold(f64::INFINITY, f64::min),
        "final_boundary_fraction": m.boundary_fraction.last(),
    });
    Ok(Outcome { tables: vec![snaps, metrics], summary, config: cfg, inputs: BTreeMap::new() })
}

pub fn validate(raw: &Config) -> Result<Outcome> {
    let cfg = resolve(raw, VALIDATE_KEYS)?;
    let params = derive_params(&cfg)?;
    let r = markov_check(
        &params,
        cfg.usize_or("n_sites", 1519)?,
        cfg.req_f64("gap")?,
        cfg.req_f64("lambda_edge")?,
        cfg.req_f64("threshold")?,
    )
    .map_err(|e| Error::Config(e.to_string()))?;
    let mut table = Table::new("validity", &[("length", "a"), ("tau_c", "s"), ("tau_a", "s"), ("margin", "-"), ("n_max", "gamma"), ("pass", "-")]);
    table.push(vec![r.length.into(), r.tau_c.into(), r.tau_a.into(), r.margin.into(), r.n_max.into(), r.pass.into()]);
    Ok(Outcome { tables: vec![table], summary: serde_json::to_value(r).expect("report serialises"), config: cfg, inputs: BTreeMap::new() })
}
