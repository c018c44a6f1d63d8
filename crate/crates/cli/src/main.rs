mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use config::{load_file, CliResult, RunConfig};

/// Optimal control of prescribed mean curvature surfaces.
#[derive(Parser, Debug)]
#[command(name = "curvopt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the state equation for a given control.
    SolveState(Common),
    /// Solve state and adjoint for a given control.
    SolveAdjoint(Common),
    /// Run the projected gradient optimizer.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Probe J(ū + t d) − J(ū) along this many random directions
        /// (seeded by CURVOPT_SEED).
        #[arg(long)]
        growth_probe: Option<usize>,
    },
    /// Run a convergence study and write its table as CSV.
    Convergence {
        #[arg(value_enum)]
        study: Study,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        levels: Option<usize>,
    },
    /// Generate a mesh and write it in ASCII and VTK form.
    Mesh {
        #[arg(value_enum)]
        kind: MeshKind,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Study {
    State,
    Adjoint,
    Control,
    Interp,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MeshKind {
    Square,
    Clover,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON file with flat keys (or a previous run manifest).
    #[arg(long)]
    config: Option<PathBuf>,
    /// paperA, paperB, paperC or paperD.
    #[arg(long)]
    preset: Option<String>,
    /// Square: cells per side. Clover: rings (sectors = 4 × rings).
    #[arg(long)]
    mesh_n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "p")]
    p: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    /// Desired surface, e.g. sine_square, gaussian_bump, constant(0.1).
    #[arg(long)]
    yd: Option<String>,
    /// Boundary data field.
    #[arg(long)]
    v: Option<String>,
    /// Control field for solve-state and solve-adjoint.
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Newton tolerance for solve-*, relative-change tolerance for optimize.
    #[arg(long)]
    tol: Option<f64>,
    /// Optimizer stop on the KKT residual relative to its initial value.
    #[arg(long)]
    kkt_tol: Option<f64>,
    /// Newton iterations for solve-*, optimizer iterations otherwise.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, value_parser = ["p1", "p0"])]
    control_basis: Option<String>,
    /// Use the named exported field as z coordinate in VTK output.
    #[arg(long)]
    as_surface: Option<String>,
}

impl Common {
    fn flags(&self, newton_iteration: bool) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        put("preset", self.preset.clone().map(Value::from));
        put("mesh_n", self.mesh_n.map(Value::from));
        put("alpha", self.alpha.map(Value::from));
        put("p", self.p.map(Value::from));
        put("theta", self.theta.map(Value::from));
        put("yd", self.yd.clone().map(Value::from));
        put("v", self.v.clone().map(Value::from));
        put("u", self.u.clone().map(Value::from));
        put(
            "out",
            self.out
                .as_ref()
                .map(|p| Value::from(p.to_string_lossy().into_owned())),
        );
        put("kkt_tol", self.kkt_tol.map(Value::from));
        put("control_basis", self.control_basis.clone().map(Value::from));
        put("as_surface", self.as_surface.clone().map(Value::from));
        let (tol, iter) = if newton_iteration {
            ("newton_tol", "newton_max_iter")
        } else {
            ("tol", "max_iter")
        };
        put(tol, self.tol.map(Value::from));
        put(iter, self.max_iter.map(Value::from));
        m
    }

    fn resolve(&self, newton_iteration: bool, extra: Map<String, Value>) -> CliResult<RunConfig> {
        let file = match &self.config {
            Some(path) => load_file(path)?,
            None => Map::new(),
        };
        let mut flags = self.flags(newton_iteration);
        flags.extend(extra);
        RunConfig::resolve(&file, &flags)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SolveState(c) => commands::solve_state(&c.resolve(true, Map::new())?),
        Command::SolveAdjoint(c) => commands::solve_adjoint(&c.resolve(true, Map::new())?),
        Command::Optimize {
            common,
            growth_probe,
        } => commands::optimize(&common.resolve(false, Map::new())?, growth_probe),
        Command::Convergence {
            study,
            common,
            levels,
        } => {
            let mut extra = Map::new();
            if let Some(l) = levels {
                extra.insert("levels".into(), l.into());
            }
            commands::convergence(&common.resolve(false, extra)?, study)
        }
        Command::Mesh { kind, common } => {
            let mut extra = Map::new();
            let name = match kind {
                MeshKind::Square => "square",
                MeshKind::Clover => "clover",
            };
            extra.insert("mesh".into(), name.into());
            commands::mesh(&common.resolve(false, extra)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
