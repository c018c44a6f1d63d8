//! Run configuration: preset defaults, then a JSON file, then command-line
//! flags, each layer overriding the previous one.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use curvopt::{ControlBasis, Field, MeshSpec, Preset, ProblemParams};
use serde_json::{json, Map, Value};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(curvopt::Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                curvopt::Error::InvalidArgument(_) | curvopt::Error::Parse(_) => 2,
                curvopt::Error::Io(_) => 4,
                _ => 3,
            },
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<curvopt::Error> for CliError {
    fn from(e: curvopt::Error) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const KEYS: [&str; 18] = [
    "preset",
    "mesh",
    "mesh_n",
    "alpha",
    "p",
    "theta",
    "yd",
    "v",
    "u",
    "control_basis",
    "newton_tol",
    "newton_max_iter",
    "tol",
    "kkt_tol",
    "max_iter",
    "levels",
    "out",
    "as_surface",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub mesh: MeshSpec,
    pub params: ProblemParams,
    /// Control used by `solve-state` and `solve-adjoint`.
    pub u: Field,
    pub levels: Option<usize>,
    pub out: PathBuf,
    pub as_surface: Option<String>,
}

impl RunConfig {
    /// Resolves the layered settings. `file` holds flat keys; `flags` holds the
    /// keys given on the command line.
    pub fn resolve(file: &Map<String, Value>, flags: &Map<String, Value>) -> CliResult<RunConfig> {
        let mut merged = file.clone();
        for (k, v) in flags {
            merged.insert(k.clone(), v.clone());
        }
        merged.retain(|_, v| !v.is_null());
        if let Some(k) = merged.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key '{k}'")));
        }
        let preset = match merged.get("preset") {
            Some(v) => Some(parse::<Preset>(v, "preset")?),
            None => None,
        };
        let (mut params, mut mesh) = match preset {
            Some(p) => (p.params(), p.mesh()),
            None => (ProblemParams::default(), MeshSpec::Square { n: 32 }),
        };
        let mut cfg_u = Field::Constant(0.0);
        let mut levels = None;
        let mut out = PathBuf::from("out");
        let mut as_surface = None;
        for (key, value) in &merged {
            match key.as_str() {
                "preset" => {}
                "mesh" => {
                    let kind = string(value, key)?;
                    let n = match mesh {
                        MeshSpec::Square { n } => n,
                        MeshSpec::Clover { rings, .. } => rings,
                    };
                    mesh = match kind.as_str() {
                        "square" => MeshSpec::Square { n },
                        "clover" => MeshSpec::Clover {
                            rings: n,
                            sectors: 4 * n,
                        },
                        _ => return Err(CliError::Config(format!("unknown mesh kind '{kind}'"))),
                    };
                }
                "mesh_n" => {}
                "alpha" => params.alpha = number(value, key)?,
                "p" => params.p = number(value, key)?,
                "theta" => params.theta = number(value, key)?,
                "yd" => params.y_d = parse(value, key)?,
                "v" => params.v = parse(value, key)?,
                "u" => cfg_u = parse(value, key)?,
                "control_basis" => params.basis = parse::<ControlBasis>(value, key)?,
                "newton_tol" => params.newton.tol = number(value, key)?,
                "newton_max_iter" => params.newton.max_iter = count(value, key)?,
                "tol" => params.optimizer.tol = number(value, key)?,
                "kkt_tol" => params.optimizer.kkt_tol = number(value, key)?,
                "max_iter" => params.optimizer.max_iter = count(value, key)?,
                "levels" => levels = Some(count(value, key)?),
                "out" => out = PathBuf::from(string(value, key)?),
                "as_surface" => as_surface = Some(string(value, key)?),
                _ => unreachable!("keys are checked above"),
            }
        }
        if let Some(v) = merged.get("mesh_n") {
            let n = count(v, "mesh_n")?;
            if n == 0 {
                return Err(CliError::Config("mesh_n must be positive".into()));
            }
            mesh = mesh.with_resolution(n);
        }
        check_params(&params)?;
        Ok(RunConfig {
            preset,
            mesh,
            params,
            u: cfg_u,
            levels,
            out,
            as_surface,
        })
    }

    /// Flat key/value echo of every resolved setting; reading it back through
    /// [`load_file`] and [`RunConfig::resolve`] reproduces this configuration.
    pub fn to_json(&self) -> Value {
        let (kind, n) = match self.mesh {
            MeshSpec::Square { n } => ("square", n),
            MeshSpec::Clover { rings, .. } => ("clover", rings),
        };
        let p = &self.params;
        json!({
            "preset": self.preset.map(|p| p.to_string()),
            "mesh": kind,
            "mesh_n": n,
            "alpha": p.alpha,
            "p": p.p,
            "theta": p.theta,
            "yd": p.y_d.to_string(),
            "v": p.v.to_string(),
            "u": self.u.to_string(),
            "control_basis": p.basis.to_string(),
            "newton_tol": p.newton.tol,
            "newton_max_iter": p.newton.max_iter,
            "tol": p.optimizer.tol,
            "kkt_tol": p.optimizer.kkt_tol,
            "max_iter": p.optimizer.max_iter,
            "levels": self.levels,
            "out": self.out.to_string_lossy(),
            "as_surface": self.as_surface,
        })
    }
}

fn check_params(p: &ProblemParams) -> CliResult<()> {
    if !(p.alpha > 0.0 && p.alpha.is_finite()) {
        return Err(CliError::Config(format!(
            "alpha must be positive, got {}",
            p.alpha
        )));
    }
    if !(p.p > 2.0 && p.p.is_finite()) {
        return Err(CliError::Config(format!("p must exceed 2, got {}", p.p)));
    }
    if !(p.theta > 0.0 && p.theta.is_finite()) {
        return Err(CliError::Config(format!(
            "theta must be positive, got {}",
            p.theta
        )));
    }
    for (name, t) in [
        ("newton_tol", p.newton.tol),
        ("tol", p.optimizer.tol),
        ("kkt_tol", p.optimizer.kkt_tol),
    ] {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!(
                "{name} must be positive, got {t}"
            )));
        }
    }
    Ok(())
}

fn string(v: &Value, key: &str) -> CliResult<String> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| CliError::Config(format!("'{key}' must be a string")))
}

fn number(v: &Value, key: &str) -> CliResult<f64> {
    v.as_f64()
        .ok_or_else(|| CliError::Config(format!("'{key}' must be a number")))
}

fn count(v: &Value, key: &str) -> CliResult<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| CliError::Config(format!("'{key}' must be a nonnegative integer")))
}

fn parse<T: FromStr<Err = curvopt::Error>>(v: &Value, key: &str) -> CliResult<T> {
    string(v, key)?
        .parse()
        .map_err(|e: curvopt::Error| CliError::Config(format!("'{key}': {e}")))
}

/// Reads a JSON config. A run manifest is accepted as well; its `config`
/// object is used.
pub fn load_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read '{}': {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("'{}' is not valid JSON: {e}", path.display())))?;
    let obj = match value {
        Value::Object(mut obj) => match obj.remove("config") {
            Some(Value::Object(inner)) => inner,
            Some(_) => return Err(CliError::Config("'config' must be an object".into())),
            None => obj,
        },
        _ => {
            return Err(CliError::Config(
                "config file must hold a JSON object".into(),
            ))
        }
    };
    Ok(obj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn flags_override_file_and_preset() {
        let file = map(json!({"preset": "paperA", "theta": 5.0, "mesh_n": 16}));
        let flags = map(json!({"theta": 3.0}));
        let cfg = RunConfig::resolve(&file, &flags).unwrap();
        assert_eq!(cfg.params.theta, 3.0);
        assert_eq!(cfg.params.y_d, Field::SineSquare);
        assert_eq!(cfg.mesh, MeshSpec::Square { n: 16 });
    }

    #[test]
    fn clover_resolution_follows_mesh_n() {
        let cfg = RunConfig::resolve(&map(json!({"preset": "paperD", "mesh_n": 6})), &Map::new())
            .unwrap();
        assert_eq!(
            cfg.mesh,
            MeshSpec::Clover {
                rings: 6,
                sectors: 24
            }
        );
        let cfg =
            RunConfig::resolve(&map(json!({"mesh": "clover", "mesh_n": 5})), &Map::new()).unwrap();
        assert_eq!(
            cfg.mesh,
            MeshSpec::Clover {
                rings: 5,
                sectors: 20
            }
        );
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            json!({"p": 2.0}),
            json!({"alpha": 0.0}),
            json!({"theta": -1.0}),
            json!({"yd": "nonsense"}),
            json!({"preset": "paperZ"}),
            json!({"frobnicate": 1}),
            json!({"mesh_n": 0}),
            json!({"alpha": "small"}),
        ] {
            let err = RunConfig::resolve(&map(bad.clone()), &Map::new()).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let flags =
            map(json!({"preset": "paperC", "mesh_n": 12, "kkt_tol": 1e-3, "u": "constant(0.5)"}));
        let cfg = RunConfig::resolve(&Map::new(), &flags).unwrap();
        let again = RunConfig::resolve(&map(cfg.to_json()), &Map::new()).unwrap();
        assert_eq!(cfg, again);
    }
}
