//! Run configuration: TOML with one table per stage, environment overrides
//! `SSVF_<SECTION>_<KEY>`, and range checks that name the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use selfsim_core::datum::DatumFamily;

use crate::error::CliError;

pub const ENV_PREFIX: &str = "SSVF_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatumSection {
    pub family: DatumFamily,
    pub c_star: f64,
    /// CSV with one row per sphere node: direction, `u0` (3) and `F0` (9).
    pub trace_file: Option<PathBuf>,
    pub polar: usize,
    pub azimuth: usize,
}

impl Default for DatumSection {
    fn default() -> Self {
        DatumSection {
            family: DatumFamily::Axial,
            c_star: 0.01,
            trace_file: None,
            polar: 24,
            azimuth: 48,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub half_width: f64,
    pub n: usize,
    pub mask_radius: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            half_width: 16.0,
            n: 64,
            mask_radius: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSection {
    pub sigma_schedule: Vec<f64>,
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub anderson_depth: usize,
    pub norm_ceiling: f64,
    pub duhamel_nodes: usize,
    pub far_field_exponent: f64,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            sigma_schedule: vec![0.0, 0.5, 1.0],
            damping: 1.0,
            tol: 1e-8,
            max_iters: 50,
            anderson_depth: 0,
            norm_ceiling: 1e3,
            duhamel_nodes: 64,
            far_field_exponent: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvolveInit {
    /// Correction read from `v_hat.ssvf` / `h_hat.ssvf` in the output directory.
    Profile,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub dt_min: f64,
    pub picard_iters: usize,
    pub init: EvolveInit,
}

impl Default for EvolveSection {
    fn default() -> Self {
        EvolveSection {
            t0: 1.0,
            t1: 2.0,
            dt: 0.25,
            dt_min: 1e-6,
            picard_iters: 12,
            init: EvolveInit::Profile,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Number of parabolic cylinders for Y, centers drawn with the run seed.
    pub cylinders: usize,
    pub cylinder_radius: f64,
    pub cylinder_time: f64,
    pub m_exp: f64,
    pub evolve: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            cylinders: 3,
            cylinder_radius: 1.0,
            cylinder_time: 2.0,
            m_exp: 6.0,
            evolve: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { points: 11 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub gamma: f64,
    pub datum: DatumSection,
    pub grid: GridSection,
    pub solve: SolveSection,
    pub evolve: EvolveSection,
    pub verify: VerifySection,
    pub sweep: SweepSection,
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gamma: 0.5,
            datum: DatumSection::default(),
            grid: GridSection::default(),
            solve: SolveSection::default(),
            evolve: EvolveSection::default(),
            verify: VerifySection::default(),
            sweep: SweepSection::default(),
            run: RunSection::default(),
        }
    }
}

/// Line of `key` inside `[section]` (or at top level for `None`), 1-based.
fn locate(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            current = Some(name.trim().to_string());
            continue;
        }
        let matches_key = t.split('=').next().is_some_and(|k| k.trim() == key) && t.contains('=');
        if matches_key && current.as_deref() == section {
            return Some(i + 1);
        }
    }
    None
}

fn range(text: &str, section: Option<&str>, key: &str, msg: String) -> CliError {
    let dotted = match section {
        Some(s) => format!("{s}.{key}"),
        None => key.to_string(),
    };
    CliError::BadRange {
        key: dotted,
        line: locate(text, section, key),
        msg,
    }
}

/// Apply `SSVF_<SECTION>_<KEY>=value` (or `SSVF_<KEY>` for top-level keys).
/// Values parse as TOML, falling back to a plain string.
pub fn apply_overrides<I>(table: &mut Table, vars: I) -> Result<Vec<String>, CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    const SECTIONS: [&str; 7] = ["datum", "grid", "solve", "evolve", "verify", "sweep", "run"];
    let mut applied = Vec::new();
    let mut vars: Vec<_> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (name, raw) in vars {
        let rest = name[ENV_PREFIX.len()..].to_ascii_lowercase();
        let value = toml::from_str::<Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw.clone()));
        let section = SECTIONS.iter().find(|s| rest.starts_with(&format!("{s}_")));
        match section {
            Some(s) => {
                let key = rest[s.len() + 1..].to_string();
                let entry = table.entry(s.to_string()).or_insert_with(|| Value::Table(Table::new()));
                match entry {
                    Value::Table(t) => {
                        t.insert(key.clone(), value);
                    }
                    _ => return Err(CliError::Parse(format!("`{s}` must be a table to accept {name}"))),
                }
                applied.push(format!("{s}.{key}"));
            }
            None => {
                table.insert(rest.clone(), value);
                applied.push(rest);
            }
        }
    }
    Ok(applied)
}

impl RunConfig {
    /// Parse text, apply overrides, then validate.
    pub fn from_text<I>(text: &str, vars: I) -> Result<Self, CliError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table: Table = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        let applied = apply_overrides(&mut table, vars)?;
        if !applied.is_empty() {
            log::info!("environment overrides: {}", applied.join(", "));
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        cfg.validate(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Unreadable {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let cfg = Self::from_text(&text, std::env::vars())?;
        if let Some(f) = &cfg.datum.trace_file {
            // relative trace paths resolve against the config file
            let resolved = path.parent().map(|p| p.join(f)).unwrap_or_else(|| f.clone());
            if !resolved.exists() {
                return Err(CliError::Unreadable {
                    path: resolved,
                    msg: "trace file does not exist".into(),
                });
            }
            let mut cfg = cfg;
            cfg.datum.trace_file = Some(resolved);
            return Ok(cfg);
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self, text: &str) -> Result<(), CliError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(range(text, None, "gamma", format!("gamma must lie in (0,1], got {}", self.gamma)));
        }
        let d = &self.datum;
        if !(d.c_star >= 0.0 && d.c_star.is_finite()) {
            return Err(range(text, Some("datum"), "c_star", format!("c_star must be finite and >= 0, got {}", d.c_star)));
        }
        if d.polar < 4 {
            return Err(range(text, Some("datum"), "polar", format!("polar must be at least 4, got {}", d.polar)));
        }
        if d.azimuth < 8 || d.azimuth % 2 != 0 {
            return Err(range(text, Some("datum"), "azimuth", format!("azimuth must be even and at least 8, got {}", d.azimuth)));
        }
        let g = &self.grid;
        if !(g.half_width > 0.0 && g.half_width.is_finite()) {
            return Err(range(text, Some("grid"), "half_width", format!("half_width must be positive, got {}", g.half_width)));
        }
        if g.n < 8 || g.n % 2 != 0 {
            return Err(range(text, Some("grid"), "n", format!("n must be even and >= 8, got {}", g.n)));
        }
        if !g.n.is_power_of_two() {
            log::warn!("grid.n = {} is not a power of two; transforms will be slower", g.n);
        }
        if let Some(m) = g.mask_radius {
            if !(m >= 0.0 && m < g.half_width) {
                return Err(range(text, Some("grid"), "mask_radius", format!("mask_radius must lie in [0, L), got {m}")));
            }
        }
        let s = &self.solve;
        let sched = &s.sigma_schedule;
        if sched.is_empty() || sched.iter().any(|x| !(0.0..=1.0).contains(x)) || sched.windows(2).any(|w| w[1] <= w[0]) {
            return Err(range(
                text,
                Some("solve"),
                "sigma_schedule",
                format!("sigma_schedule must be nonempty and increase within [0, 1], got {sched:?}"),
            ));
        }
        if !(s.damping > 0.0 && s.damping <= 1.0) {
            return Err(range(text, Some("solve"), "damping", format!("damping must lie in (0, 1], got {}", s.damping)));
        }
        if !(s.tol > 0.0) {
            return Err(range(text, Some("solve"), "tol", format!("tol must be positive, got {}", s.tol)));
        }
        if s.max_iters == 0 {
            return Err(range(text, Some("solve"), "max_iters", "max_iters must be positive".into()));
        }
        if !(s.norm_ceiling > 0.0) {
            return Err(range(text, Some("solve"), "norm_ceiling", "norm_ceiling must be positive".into()));
        }
        if s.duhamel_nodes < 2 {
            return Err(range(text, Some("solve"), "duhamel_nodes", "duhamel_nodes must be at least 2".into()));
        }
        if !(s.far_field_exponent > 0.0) {
            return Err(range(text, Some("solve"), "far_field_exponent", "far_field_exponent must be positive".into()));
        }
        let e = &self.evolve;
        if !(e.t0 > 0.0 && e.t1 > e.t0) {
            return Err(range(text, Some("evolve"), "t1", format!("need 0 < t0 < t1, got t0 = {}, t1 = {}", e.t0, e.t1)));
        }
        if !(e.dt > 0.0 && e.dt_min > 0.0 && e.dt_min <= e.dt) {
            return Err(range(text, Some("evolve"), "dt", format!("need 0 < dt_min <= dt, got dt = {}", e.dt)));
        }
        let v = &self.verify;
        if !(v.m_exp > 5.0) {
            return Err(range(text, Some("verify"), "m_exp", format!("m_exp must exceed 5, got {}", v.m_exp)));
        }
        if !(v.cylinder_radius > 0.0) || v.cylinder_radius >= 0.25 * g.half_width {
            return Err(range(
                text,
                Some("verify"),
                "cylinder_radius",
                format!("cylinder_radius must lie in (0, L/4), got {}", v.cylinder_radius),
            ));
        }
        if !(v.cylinder_time > v.cylinder_radius * v.cylinder_radius) {
            return Err(range(text, Some("verify"), "cylinder_time", "cylinder_time must exceed radius^2".into()));
        }
        if self.sweep.points < 2 {
            return Err(range(text, Some("sweep"), "points", "points must be at least 2".into()));
        }
        if self.run.workers == Some(0) {
            return Err(range(text, Some("run"), "workers", "workers must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> Vec<(String, String)> {
        Vec::new()
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_text("", none()).unwrap();
        assert_eq!(c.grid.half_width, 16.0);
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.gamma, 0.5);
        assert_eq!(c.solve.damping, 1.0);
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "gamma = 0.25\n[grid]\nn = 32\nhalf_width = 8.0\n[solve]\nsigma_schedule = [0.0, 1.0]\n";
        let c = RunConfig::from_text(text, none()).unwrap();
        let again = RunConfig::from_text(&c.to_text(), none()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.to_text(), again.to_text());
    }

    #[test]
    fn bad_gamma_names_key_and_line() {
        let err = RunConfig::from_text("# header\n\ngamma = 1.5\n", none()).unwrap_err();
        match &err {
            CliError::BadRange { key, line, msg } => {
                assert_eq!(key, "gamma");
                assert_eq!(*line, Some(3));
                assert!(msg.contains("gamma must lie in (0,1]"));
            }
            other => panic!("{other:?}"),
        }
        let err = RunConfig::from_text("[solve]\nmax_iters = 3\ndamping = 2.0\n", none()).unwrap_err();
        assert!(matches!(err, CliError::BadRange { ref key, line: Some(3), .. } if key == "solve.damping"), "{err:?}");
    }

    #[test]
    fn non_power_of_two_is_accepted() {
        let c = RunConfig::from_text("[grid]\nn = 10\n", none()).unwrap();
        assert_eq!(c.grid.n, 10);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_parse_errors() {
        assert!(matches!(RunConfig::from_text("[grid]\nsize = 3\n", none()), Err(CliError::Parse(_))));
        assert!(matches!(RunConfig::from_text("[grid]\nn = \"big\"\n", none()), Err(CliError::Parse(_))));
        assert!(matches!(RunConfig::from_text("gamma = \n", none()), Err(CliError::Parse(_))));
    }

    #[test]
    fn environment_overrides() {
        let vars = vec![
            ("SSVF_GRID_N".to_string(), "32".to_string()),
            ("SSVF_GAMMA".to_string(), "0.75".to_string()),
            ("SSVF_DATUM_FAMILY".to_string(), "zero".to_string()),
            ("SSVF_SOLVE_SIGMA_SCHEDULE".to_string(), "[0.0]".to_string()),
            ("OTHER".to_string(), "1".to_string()),
        ];
        let c = RunConfig::from_text("[grid]\nn = 64\n", vars).unwrap();
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.gamma, 0.75);
        assert_eq!(c.datum.family, DatumFamily::Zero);
        assert_eq!(c.solve.sigma_schedule, vec![0.0]);
    }

    proptest::proptest! {
        #[test]
        fn emitted_configs_parse_back(
            gamma in 0.01f64..=1.0,
            c_star in 0.0f64..10.0,
            half in 2u32..40,
            n in 4usize..64,
            seed in 0..=i64::MAX as u64,
            damping in 0.01f64..=1.0,
            mask in proptest::option::of(0.0f64..1.0),
        ) {
            let mut c = RunConfig::default();
            c.gamma = gamma;
            c.datum.c_star = c_star;
            c.grid.half_width = f64::from(half) * 0.5 + 1.0;
            c.grid.n = 2 * n;
            c.grid.mask_radius = mask;
            c.solve.damping = damping;
            c.run.seed = seed;
            c.verify.cylinder_radius = 0.2;
            c.verify.cylinder_time = 0.5;
            let text = c.to_text();
            let back = RunConfig::from_text(&text, none()).unwrap();
            proptest::prop_assert_eq!(&back, &c);
            proptest::prop_assert_eq!(back.to_text(), text);
        }
    }
}
