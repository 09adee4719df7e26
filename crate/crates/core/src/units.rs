//! Physical constants, derived scales and the flat key-value configuration.
//!
//! Everything downstream works in dimensionless units: lengths in the lattice
//! constant `a`, frequencies and rates in the bulk emission rate `gamma`.
//! [`PhysicalParams::scaled`] is the single place where SI values become
//! dimensionless ones.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const C_LIGHT: f64 = 299_792_458.0;

/// Raw configuration: ordered `key = value` pairs.
pub type Config = BTreeMap<String, String>;

/// Default values for every model key that may be omitted.
pub const MODEL_DEFAULTS: &[(&str, &str)] = &[
    ("lambda_nm", "738"),
    ("gamma_over_2pi_hz", "3e8"),
    ("n_d", "2.4"),
    ("v_s_over_c", "0.25"),
    ("e0_sq_a3", "0.1855"),
    ("gamma0_over_gamma", "0"),
    ("epsilon_scale", "1"),
];

/// Model keys that have no default.
pub const MODEL_REQUIRED: &[&str] = &["mu_b_over_gamma", "delta_a_over_2pi_thz"];

/// Parse the flat configuration grammar.
///
/// ```text
/// # comment
/// key = value      # trailing comments are allowed
/// ```
///
/// Keys are `[a-z0-9_]+`, values are the trimmed remainder of the line.
/// Duplicate keys are an error.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut out = Config::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let k = k.trim();
        let v = v.trim();
        if k.is_empty() || !k.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') {
            return Err(Error::Config(format!("line {}: invalid key `{k}`", lineno + 1)));
        }
        if v.is_empty() {
            return Err(Error::Config(format!("line {}: empty value for `{k}`", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(out)
}

/// Inverse of [`parse_config`]; keys come out sorted.
pub fn emit_config(cfg: &Config) -> String {
    let mut s = String::new();
    for (k, v) in cfg {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Typed lookup helpers shared by every module that reads configuration.
pub trait ConfigExt {
    fn get_f64(&self, key: &str) -> Result<Option<f64>>;
    fn get_usize(&self, key: &str) -> Result<Option<usize>>;
    fn get_u64(&self, key: &str) -> Result<Option<u64>>;
    fn get_str(&self, key: &str) -> Option<&str>;
    fn req_f64(&self, key: &str) -> Result<f64> {
        self.get_f64(key)?.ok_or_else(|| Error::Config(format!("missing key `{key}`")))
    }
    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.get_f64(key)?.unwrap_or(default))
    }
    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.get_usize(key)?.unwrap_or(default))
    }
}

impl ConfigExt for Config {
    fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Config(format!("`{key}`: not a finite number: `{v}`")))
            })
            .transpose()
    }
    fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.get(key)
            .map(|v| v.parse::<usize>().map_err(|_| Error::Config(format!("`{key}`: not a non-negative integer: `{v}`"))))
            .transpose()
    }
    fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| v.parse::<u64>().map_err(|_| Error::Config(format!("`{key}`: not a non-negative integer: `{v}`"))))
            .transpose()
    }
    fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).map(String::as_str)
    }
}

/// Primary inputs, SI except where noted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primaries {
    pub lambda_a: f64,
    pub gamma: f64,
    pub n_d: f64,
    /// Zeeman shift in units of gamma (sign selects the field direction).
    pub mu_b: f64,
    pub delta_a: f64,
    pub v_s: f64,
    /// Field intensity at the emitter in units of 1/a^3.
    pub e0_sq_a3: f64,
    /// Free-space rate in units of gamma.
    pub gamma_0: f64,
    /// Explicit lattice constant; `None` means a = lambda/3.
    pub a_override: Option<f64>,
    /// Multiplier on the default +iε regulator.
    pub epsilon_scale: f64,
}

/// All physical constants and derived scales in one validated record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    pub primaries: Primaries,
    pub omega_a: f64,
    pub a: f64,
    pub omega_dirac: f64,
    pub cell_area: f64,
    pub xi: f64,
    /// Field intensity in m^-3.
    pub e0_sq: f64,
    /// 3 pi gamma c / (omega_A n_d), m·rad/s.
    pub g_pref: f64,
    /// A c^2 E0^2 delta_A / (8 omega_A v_s^2), m^-1.
    pub k_amp: f64,
}

/// Dimensionless view: lengths in a, frequencies in gamma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaled {
    pub omega_a: f64,
    pub delta_a: f64,
    pub v_s: f64,
    pub c: f64,
    pub xi: f64,
    pub cell_area: f64,
    pub e0_sq: f64,
    pub g_pref: f64,
    pub k_amp: f64,
    /// g_pref * k_amp: the bare dipole-coupling amplitude in gamma.
    pub coupling: f64,
    pub mu_b: f64,
    pub gamma_0: f64,
    pub wavelength: f64,
    pub light_cone_radius: f64,
}

impl PhysicalParams {
    /// The single derivation path from primaries to derived fields.
    pub fn derive(p: Primaries) -> Result<Self> {
        let positive = [
            ("lambda", p.lambda_a),
            ("gamma", p.gamma),
            ("n_d", p.n_d),
            ("delta_a", p.delta_a),
            ("v_s", p.v_s),
            ("e0_sq", p.e0_sq_a3),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and positive, got {v}")));
            }
        }
        if !p.mu_b.is_finite() {
            return Err(Error::Config("mu_b must be finite".into()));
        }
        if !(p.gamma_0.is_finite() && p.gamma_0 >= 0.0) {
            return Err(Error::Config("gamma_0 must be finite and non-negative".into()));
        }
        if p.v_s >= C_LIGHT {
            return Err(Error::Config("v_s >= c is non-physical".into()));
        }
        if let Some(a) = p.a_override {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::Config(format!("lattice constant must be positive, got {a}")));
            }
        }
        let omega_a = 2.0 * PI * C_LIGHT / p.lambda_a;
        let a = p.a_override.unwrap_or(p.lambda_a / 3.0);
        let cell_area = 3f64.sqrt() / 2.0 * a * a;
        let e0_sq = p.e0_sq_a3 / (a * a * a);
        Ok(Self {
            primaries: p,
            omega_a,
            a,
            omega_dirac: omega_a + p.delta_a,
            cell_area,
            xi: p.v_s / p.delta_a,
            e0_sq,
            g_pref: 3.0 * PI * p.gamma * C_LIGHT / (omega_a * p.n_d),
            k_amp: cell_area * C_LIGHT * C_LIGHT * e0_sq * p.delta_a / (8.0 * omega_a * p.v_s * p.v_s),
        })
    }

    pub fn mu_b(&self) -> f64 {
        self.primaries.mu_b
    }

    /// Same parameters with a different Zeeman shift.
    pub fn with_mu_b(&self, mu_b: f64) -> Result<Self> {
        Self::derive(Primaries { mu_b, ..self.primaries })
    }

    /// Same parameters with a different detuning (rad/s).
    pub fn with_delta_a(&self, delta_a: f64) -> Result<Self> {
        Self::derive(Primaries { delta_a, ..self.primaries })
    }

    pub fn scaled(&self) -> Scaled {
        let p = &self.primaries;
        let (a, g) = (self.a, p.gamma);
        let g_pref = self.g_pref / (a * g);
        let k_amp = self.k_amp * a;
        Scaled {
            omega_a: self.omega_a / g,
            delta_a: p.delta_a / g,
            v_s: p.v_s / (a * g),
            c: C_LIGHT / (a * g),
            xi: self.xi / a,
            cell_area: self.cell_area / (a * a),
            e0_sq: p.e0_sq_a3,
            g_pref,
            k_amp,
            coupling: g_pref * k_amp,
            mu_b: p.mu_b,
            gamma_0: p.gamma_0,
            wavelength: p.lambda_a / a,
            light_cone_radius: 2.0 * PI * a / p.lambda_a,
        }
    }
}

/// Build [`PhysicalParams`] from a raw configuration (defaults applied).
pub fn derive_params(cfg: &Config) -> Result<PhysicalParams> {
    let mut full = cfg.clone();
    for (k, v) in MODEL_DEFAULTS {
        full.entry((*k).to_string()).or_insert_with(|| (*v).to_string());
    }
    for k in MODEL_REQUIRED {
        if !full.contains_key(*k) {
            return Err(Error::Config(format!("missing key `{k}`")));
        }
    }
    let lambda_nm = full.req_f64("lambda_nm")?;
    if lambda_nm <= 0.0 {
        return Err(Error::Config(format!("lambda_nm must be positive, got {lambda_nm}")));
    }
    let v_over_c = full.req_f64("v_s_over_c")?;
    if v_over_c <= 0.0 {
        return Err(Error::Config(format!("v_s_over_c must be positive, got {v_over_c}")));
    }
    if v_over_c >= 1.0 {
        return Err(Error::Config("v_s_over_c >= 1 is non-physical".into()));
    }
    let a_override = full.get_f64("a_nm_override")?.map(|a| a * 1e-9);
    let epsilon_scale = full.req_f64("epsilon_scale")?;
    if epsilon_scale <= 0.0 {
        return Err(Error::Config(format!("epsilon_scale must be positive, got {epsilon_scale}")));
    }
    PhysicalParams::derive(Primaries {
        lambda_a: lambda_nm * 1e-9,
        gamma: 2.0 * PI * full.req_f64("gamma_over_2pi_hz")?,
        n_d: full.req_f64("n_d")?,
        mu_b: full.req_f64("mu_b_over_gamma")?,
        delta_a: 2.0 * PI * 1e12 * full.req_f64("delta_a_over_2pi_thz")?,
        v_s: v_over_c * C_LIGHT,
        e0_sq_a3: full.req_f64("e0_sq_a3")?,
        gamma_0: full.req_f64("gamma0_over_gamma")?,
        a_override,
        epsilon_scale,
    })
}

/// Convenience constructor used by tests, recipes and benches.
pub fn standard_params(delta_a_over_2pi_thz: f64, mu_b: f64) -> PhysicalParams {
    let mut cfg = Config::new();
    cfg.insert("delta_a_over_2pi_thz".into(), delta_a_over_2pi_thz.to_string());
    cfg.insert("mu_b_over_gamma".into(), mu_b.to_string());
    derive_params(&cfg).expect("standard parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig4_scales() {
        let p = standard_params(18.73, 0.5);
        assert!((p.a - 246e-9).abs() < 1e-15);
        // xi = v_s / delta_A, evaluated independently
        let xi = 0.25 * 299_792_458.0 / (2.0 * PI * 18.73e12);
        assert!((p.xi - xi).abs() / xi < 1e-14);
        assert!((p.xi / p.a - 2.589).abs() < 1e-3);
        assert_eq!(p.primaries.e0_sq_a3, 0.1855);
        assert_eq!(p.xi * p.primaries.delta_a, p.primaries.v_s);
    }

    #[test]
    fn omega_a_definition() {
        let p = standard_params(1.0, 0.0);
        assert!((p.omega_a / (2.0 * PI * C_LIGHT / 738e-9) - 1.0).abs() < 1e-15);
        let s = p.scaled();
        assert!((s.omega_a * s.wavelength / s.c - 2.0 * PI).abs() < 1e-12);
        assert!((s.light_cone_radius - 2.0 * PI / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut cfg = Config::new();
        cfg.insert("delta_a_over_2pi_thz".into(), "1".into());
        assert!(derive_params(&cfg).is_err(), "mu_b is required");
        cfg.insert("mu_b_over_gamma".into(), "1".into());
        assert!(derive_params(&cfg).is_ok());
        for (k, v) in [("lambda_nm", "-5"), ("v_s_over_c", "1.2"), ("v_s_over_c", "0"), ("n_d", "nan")] {
            let mut c = cfg.clone();
            c.insert(k.into(), v.into());
            assert!(derive_params(&c).is_err(), "{k}={v}");
        }
    }

    #[test]
    fn a_override() {
        let mut cfg = Config::new();
        cfg.insert("delta_a_over_2pi_thz".into(), "1".into());
        cfg.insert("mu_b_over_gamma".into(), "1".into());
        cfg.insert("a_nm_override".into(), "240".into());
        let p = derive_params(&cfg).unwrap();
        assert!((p.a - 240e-9).abs() < 1e-18);
        assert!((p.scaled().wavelength - 738.0 / 240.0).abs() < 1e-12);
    }

    #[test]
    fn coupling_amplitude_scales_with_detuning() {
        let s1 = standard_params(18.73, 0.5).scaled();
        // g_pref/(a gamma) = 3 pi / (n_d omega_A a / c);  K_amp a = (sqrt3/2)(E0^2 a^3)(c/v)^2 (delta/omega_A) / 8
        let w = 2.0 * PI / 3.0;
        let d = 18.73e12 / (C_LIGHT / 738e-9);
        let expect = 3.0 * PI / (2.4 * w) * (3f64.sqrt() / 2.0) * 0.1855 * 16.0 * d / 8.0;
        assert!((s1.coupling - expect).abs() / expect < 1e-12);
        assert!((s1.coupling - 0.02778).abs() < 5e-5);
    }

    #[test]
    fn config_grammar() {
        let text = "# header\nlambda_nm = 738   # nm\n\nmu_b_over_gamma=0.5\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c["lambda_nm"], "738");
        assert_eq!(c["mu_b_over_gamma"], "0.5");
        assert_eq!(parse_config(&emit_config(&c)).unwrap(), c);
        assert!(parse_config("a = 1\na = 2").is_err());
        assert!(parse_config("Bad = 1").is_err());
        assert!(parse_config("novalue").is_err());
        assert!(parse_config("k =").is_err());
    }
}
