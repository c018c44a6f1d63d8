//! Frozen configurations of the four reference experiments.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::fields::Field;
use crate::mesh::{clover_mesh, unit_square_mesh, Mesh};
use crate::optimize::ProblemParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshSpec {
    Square { n: usize },
    Clover { rings: usize, sectors: usize },
}

impl MeshSpec {
    pub fn build(&self) -> Result<Mesh> {
        match *self {
            MeshSpec::Square { n } => unit_square_mesh(n),
            MeshSpec::Clover { rings, sectors } => clover_mesh(rings, sectors),
        }
    }

    /// Same family at resolution `n`: `n × n` cells on the square, `n` rings
    /// and `4n` sectors on the clover.
    pub fn with_resolution(&self, n: usize) -> MeshSpec {
        match self {
            MeshSpec::Square { .. } => MeshSpec::Square { n },
            MeshSpec::Clover { .. } => MeshSpec::Clover {
                rings: n,
                sectors: 4 * n,
            },
        }
    }
}

impl fmt::Display for MeshSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshSpec::Square { n } => write!(f, "square({n})"),
            MeshSpec::Clover { rings, sectors } => write!(f, "clover({rings},{sectors})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Sine target on the unit square, `θ = 20`.
    PaperA,
    /// As `PaperA` with `θ = 2`.
    PaperB,
    /// Gaussian target with nonzero boundary data.
    PaperC,
    /// Cosine target on the clover.
    PaperD,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::PaperA,
        Preset::PaperB,
        Preset::PaperC,
        Preset::PaperD,
    ];

    pub fn params(&self) -> ProblemParams {
        let base = ProblemParams {
            alpha: 1e-6,
            p: 2.5,
            theta: 20.0,
            y_d: Field::SineSquare,
            v: Field::Constant(0.0),
            ..ProblemParams::default()
        };
        match self {
            Preset::PaperA => base,
            Preset::PaperB => ProblemParams { theta: 2.0, ..base },
            Preset::PaperC => ProblemParams {
                y_d: Field::GaussianBump,
                v: Field::SineCosBoundary,
                ..base
            },
            Preset::PaperD => ProblemParams {
                y_d: Field::CosineField,
                ..base
            },
        }
    }

    pub fn mesh(&self) -> MeshSpec {
        match self {
            Preset::PaperA | Preset::PaperB | Preset::PaperC => MeshSpec::Square { n: 64 },
            Preset::PaperD => MeshSpec::Clover {
                rings: 24,
                sectors: 96,
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::PaperA => "paperA",
            Preset::PaperB => "paperB",
            Preset::PaperC => "paperC",
            Preset::PaperD => "paperD",
        })
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| invalid(format!("unknown preset '{s}' (expected paperA..paperD)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in Preset::ALL {
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
        assert!("paperE".parse::<Preset>().is_err());
    }

    #[test]
    fn presets_differ_only_where_expected() {
        let a = Preset::PaperA.params();
        assert_eq!((a.alpha, a.p, a.theta), (1e-6, 2.5, 20.0));
        assert_eq!(
            Preset::PaperB.params(),
            ProblemParams {
                theta: 2.0,
                ..a.clone()
            }
        );
        let c = Preset::PaperC.params();
        assert_eq!((c.y_d, c.v), (Field::GaussianBump, Field::SineCosBoundary));
        assert_eq!(Preset::PaperD.params().y_d, Field::CosineField);
        assert_eq!(
            Preset::PaperD.mesh(),
            MeshSpec::Clover {
                rings: 24,
                sectors: 96
            }
        );
    }

    #[test]
    fn resolution_override_keeps_family() {
        assert_eq!(
            MeshSpec::Square { n: 64 }.with_resolution(8),
            MeshSpec::Square { n: 8 }
        );
        let c = MeshSpec::Clover {
            rings: 24,
            sectors: 96,
        }
        .with_resolution(6);
        assert_eq!(
            c,
            MeshSpec::Clover {
                rings: 6,
                sectors: 24
            }
        );
        assert_eq!(c.build().unwrap().num_vertices(), 1 + 6 * 24);
    }
}
