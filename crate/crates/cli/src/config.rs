//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Lists are comma separated.
//! Recognized keys: `domain_half_width`, `T`, `L`, `N`, `N_max`, `N_list`,
//! `N_p`, `a`, `eps_rule` (`fixed` or `power`), `eps_c`, `eps_p`, `seed`,
//! `variant`, `checkpoints`, `u0`, `path_file`, `out_dir`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sacfv::experiments::{InitialDatum, StudyConfig};
use sacfv::scheme::{EpsilonSchedule, StepVariant};
use sacfv::{Error, Result};

const KEYS: &[&str] = &[
    "domain_half_width",
    "T",
    "L",
    "N",
    "N_max",
    "N_list",
    "N_p",
    "a",
    "eps_rule",
    "eps_c",
    "eps_p",
    "seed",
    "variant",
    "checkpoints",
    "u0",
    "path_file",
    "out_dir",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub study: StudyConfig,
    pub path_file: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Raw entries in file order, later duplicates win.
pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`, got {raw:?}", i + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!("line {}: unknown key {key:?}", i + 1)));
        }
        map.insert(key.to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse(format!("{key}: cannot parse {value:?}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| scalar(key, s)).collect()
}

fn initial_datum(value: &str) -> Result<InitialDatum> {
    let (kind, args) = value.split_once(':').unwrap_or((value, ""));
    match kind.trim() {
        "reference" => Ok(InitialDatum::Reference),
        "constant" => Ok(InitialDatum::Constant(scalar("u0", args.trim())?)),
        "affine" => match list::<f64>("u0", args)?.as_slice() {
            [scale, shift] => Ok(InitialDatum::Affine { scale: *scale, shift: *shift }),
            _ => Err(Error::Parse(format!("u0: affine needs `affine:<scale>,<shift>`, got {value:?}"))),
        },
        _ => Err(Error::InvalidConfig(format!("u0: unknown initial datum {value:?}"))),
    }
}

/// Applies `entries` on top of `base`; relative `path_file`s are resolved
/// against `base_dir`.
pub fn apply_entries(
    mut run: RunConfig,
    entries: &BTreeMap<String, String>,
    base_dir: &Path,
) -> Result<RunConfig> {
    let s = &mut run.study;
    let (mut rule, mut c, mut p) = match s.epsilon {
        EpsilonSchedule::Fixed(e) => ("fixed".to_string(), e, 0.4),
        EpsilonSchedule::Power { coefficient, exponent } => ("power".to_string(), coefficient, exponent),
    };
    for (key, value) in entries {
        let v = value.as_str();
        match key.as_str() {
            "domain_half_width" => s.half_width = scalar(key, v)?,
            "T" => s.horizon = scalar(key, v)?,
            "L" => s.cells_per_axis = scalar(key, v)?,
            "N" => s.steps = scalar(key, v)?,
            "N_max" => s.n_max = scalar(key, v)?,
            "N_list" => s.n_list = list(key, v)?,
            "N_p" => s.paths = scalar(key, v)?,
            "a" => s.amplitudes = list(key, v)?,
            "eps_rule" => rule = v.to_ascii_lowercase(),
            "eps_c" => c = scalar(key, v)?,
            "eps_p" => p = scalar(key, v)?,
            "seed" => s.seed = scalar(key, v)?,
            "variant" => s.variant = v.parse::<StepVariant>()?,
            "checkpoints" => s.checkpoints = list(key, v)?,
            "u0" => s.initial = initial_datum(v)?,
            "path_file" => run.path_file = Some(base_dir.join(v)),
            "out_dir" => run.out_dir = PathBuf::from(v),
            _ => unreachable!("keys are checked while parsing"),
        }
    }
    s.epsilon = match rule.as_str() {
        "fixed" => EpsilonSchedule::Fixed(c),
        "power" => EpsilonSchedule::Power { coefficient: c, exponent: p },
        other => return Err(Error::InvalidConfig(format!("eps_rule: expected fixed or power, got {other:?}"))),
    };
    Ok(run)
}

/// Sorted `key = value` rendering of everything that affects results. An
/// injected path enters through the digest of its contents.
pub fn canonical(study: &StudyConfig, path_digest: Option<&str>) -> String {
    let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
    let mut entries: BTreeMap<&str, String> = BTreeMap::new();
    entries.insert("domain_half_width", study.half_width.to_string());
    entries.insert("T", study.horizon.to_string());
    entries.insert("L", study.cells_per_axis.to_string());
    entries.insert("N", study.steps.to_string());
    entries.insert("N_max", study.n_max.to_string());
    entries.insert("N_list", join(&study.n_list));
    entries.insert("N_p", study.paths.to_string());
    entries.insert("a", study.amplitudes.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
    match study.epsilon {
        EpsilonSchedule::Fixed(e) => {
            entries.insert("eps_rule", "fixed".into());
            entries.insert("eps_c", e.to_string());
        }
        EpsilonSchedule::Power { coefficient, exponent } => {
            entries.insert("eps_rule", "power".into());
            entries.insert("eps_c", coefficient.to_string());
            entries.insert("eps_p", exponent.to_string());
        }
    }
    entries.insert("seed", study.seed.to_string());
    entries.insert("variant", study.variant.to_string());
    entries.insert("checkpoints", join(&study.checkpoints));
    entries.insert(
        "u0",
        match &study.initial {
            InitialDatum::Reference => "reference".into(),
            InitialDatum::Constant(c) => format!("constant:{c}"),
            InitialDatum::Affine { scale, shift } => format!("affine:{scale},{shift}"),
            InitialDatum::Polynomial(p) => format!("polynomial:{:?};{:?}", p.x, p.y),
        },
    );
    if let Some(d) = path_digest {
        entries.insert("path_file_sha256", d.to_string());
    }
    let mut out = String::new();
    for (k, v) in entries {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}
