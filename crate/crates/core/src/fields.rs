//! Catalog of named analytic fields used for targets, boundary data and
//! manufactured solutions.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::mesh::Point;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Field {
    /// `sin(2πx) sin(2πy)`
    SineSquare,
    /// `0.1 exp(-((x-½)² + (y-½)²) / 0.1)`
    GaussianBump,
    /// `0.1 cos(2πx) cos(2πy)`
    CosineField,
    /// `-0.1 sin(πx) cos(2πy)`
    SineCosBoundary,
    Constant(f64),
    /// `amplitude · sin(πx) sin(πy)`
    SineMode(f64),
    /// Upper hemisphere `√(R² − |x − (½,½)|²)`; its mean curvature operator
    /// evaluates to `2/R`.
    SphericalCap(f64),
    /// `a + b x + c y`
    Linear(f64, f64, f64),
}

impl Field {
    pub fn value(&self, p: Point) -> f64 {
        let [x, y] = p;
        match *self {
            Field::SineSquare => (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
            Field::GaussianBump => {
                let r2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
                0.1 * (-r2 / 0.1).exp()
            }
            Field::CosineField => 0.1 * (2.0 * PI * x).cos() * (2.0 * PI * y).cos(),
            Field::SineCosBoundary => -0.1 * (PI * x).sin() * (2.0 * PI * y).cos(),
            Field::Constant(c) => c,
            Field::SineMode(a) => a * (PI * x).sin() * (PI * y).sin(),
            Field::SphericalCap(r) => {
                let d2 = (x - 0.5).powi(2) + (y - 0.5).powi(2);
                (r * r - d2).sqrt()
            }
            Field::Linear(a, b, c) => a + b * x + c * y,
        }
    }

    pub fn gradient(&self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        let tau = 2.0 * PI;
        match *self {
            Field::SineSquare => [
                tau * (tau * x).cos() * (tau * y).sin(),
                tau * (tau * x).sin() * (tau * y).cos(),
            ],
            Field::GaussianBump => {
                let g = self.value(p);
                [-g * 2.0 * (x - 0.5) / 0.1, -g * 2.0 * (y - 0.5) / 0.1]
            }
            Field::CosineField => [
                -0.1 * tau * (tau * x).sin() * (tau * y).cos(),
                -0.1 * tau * (tau * x).cos() * (tau * y).sin(),
            ],
            Field::SineCosBoundary => [
                -0.1 * PI * (PI * x).cos() * (tau * y).cos(),
                0.1 * tau * (PI * x).sin() * (tau * y).sin(),
            ],
            Field::Constant(_) => [0.0, 0.0],
            Field::SineMode(a) => [
                a * PI * (PI * x).cos() * (PI * y).sin(),
                a * PI * (PI * x).sin() * (PI * y).cos(),
            ],
            Field::SphericalCap(_) => {
                let h = self.value(p);
                [-(x - 0.5) / h, -(y - 0.5) / h]
            }
            Field::Linear(_, b, c) => [b, c],
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Field::Constant(c) if *c == 0.0)
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::SineSquare => write!(f, "sine_square"),
            Field::GaussianBump => write!(f, "gaussian_bump"),
            Field::CosineField => write!(f, "cosine_field"),
            Field::SineCosBoundary => write!(f, "sine_cos_boundary"),
            Field::Constant(c) => write!(f, "constant({c})"),
            Field::SineMode(a) => write!(f, "sine_mode({a})"),
            Field::SphericalCap(r) => write!(f, "spherical_cap({r})"),
            Field::Linear(a, b, c) => write!(f, "linear({a},{b},{c})"),
        }
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let unknown = || Error::InvalidArgument(format!("unknown field '{s}'"));
        let (name, args) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(unknown)?;
                let args = inner
                    .split(',')
                    .map(|a| a.trim().parse::<f64>().map_err(|_| unknown()))
                    .collect::<Result<Vec<_>, _>>()?;
                if args.iter().any(|a| !a.is_finite()) {
                    return Err(unknown());
                }
                (&s[..open], args)
            }
            None => (s, Vec::new()),
        };
        let field = match (name, &args[..]) {
            ("sine_square", []) => Field::SineSquare,
            ("gaussian_bump", []) => Field::GaussianBump,
            ("cosine_field", []) => Field::CosineField,
            ("sine_cos_boundary", []) => Field::SineCosBoundary,
            ("zero", []) => Field::Constant(0.0),
            ("constant", [c]) => Field::Constant(*c),
            ("sine_mode", [a]) => Field::SineMode(*a),
            ("spherical_cap", [r]) if *r > 0.75 => Field::SphericalCap(*r),
            ("linear", [a, b, c]) => Field::Linear(*a, *b, *c),
            _ => return Err(unknown()),
        };
        Ok(field)
    }
}
