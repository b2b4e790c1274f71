//! Parameter values: scalars and sampled interaction tables.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kind::{ModuleKind, ParamName};

/// A sampled function, linearly interpolated between knots and held constant
/// beyond the first and last knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("table needs at least 2 points, got {0}")]
    TooShort(usize),
    #[error("table value at index {0} is not finite")]
    NotFinite(usize),
    #[error("table abscissae not strictly increasing at index {0}")]
    NotIncreasing(usize),
}

impl Table {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, TableError> {
        let table = Table { points };
        table.check()?;
        Ok(table)
    }

    /// Builds a table without validation. Use [`Table::check`] before simulating.
    pub fn new_unchecked(points: Vec<(f64, f64)>) -> Self {
        Table { points }
    }

    /// Two-point table that is zero everywhere.
    pub fn zero() -> Self {
        Table { points: vec![(-1.0, 0.0), (1.0, 0.0)] }
    }

    /// Samples `f` on `n` evenly spaced knots over `[lo, hi]`.
    pub fn sample(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, TableError> {
        let n = n.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        let points = (0..n)
            .map(|i| {
                let x = if i == n - 1 { hi } else { lo + step * i as f64 };
                (x, f(x))
            })
            .collect();
        Table::new(points)
    }

    pub fn check(&self) -> Result<(), TableError> {
        if self.points.len() < 2 {
            return Err(TableError::TooShort(self.points.len()));
        }
        for (i, &(x, y)) in self.points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(TableError::NotFinite(i));
            }
            if i > 0 && x <= self.points[i - 1].0 {
                return Err(TableError::NotIncreasing(i));
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        let (x0, y0) = pts[0];
        let (xn, yn) = pts[pts.len() - 1];
        if x <= x0 {
            return y0;
        }
        if x >= xn {
            return yn;
        }
        // first knot strictly greater than x
        let hi = pts.partition_point(|&(px, _)| px <= x);
        let (xa, ya) = pts[hi - 1];
        if xa == x {
            return ya;
        }
        let (xb, yb) = pts[hi];
        ya + (yb - ya) * (x - xa) / (xb - xa)
    }

    /// Largest and smallest segment slopes.
    pub fn slope_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for w in self.points.windows(2) {
            let s = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        (lo, hi)
    }
}

/// Value carried by a parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Table(Table),
}

impl ParamValue {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            ParamValue::Scalar(v) => Some(*v),
            ParamValue::Table(_) => None,
        }
    }

    pub fn as_table(&self) -> Option<&Table> {
        match self {
            ParamValue::Table(t) => Some(t),
            ParamValue::Scalar(_) => None,
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Scalar(v)
    }
}

impl From<Table> for ParamValue {
    fn from(t: Table) -> Self {
        ParamValue::Table(t)
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Scalar(v) => write!(f, "{v:?}"),
            ParamValue::Table(t) => {
                let mut first = true;
                for (x, y) in t.points() {
                    if !first {
                        f.write_str(" ")?;
                    }
                    first = false;
                    write!(f, "{x:?} {y:?}")?;
                }
                Ok(())
            }
        }
    }
}

/// Reasons a parameter value is illegal for its name.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ValueError {
    #[error("inertia must be positive, got {0}")]
    NonPositiveInertia(f64),
    #[error("malformed table: {0}")]
    MalformedTable(#[from] TableError),
    #[error("{name} expects {expected}")]
    WrongType { name: ParamName, expected: &'static str },
    #[error("{name} must be finite")]
    NotFinite { name: ParamName },
    #[error("{name} must be non-negative, got {value}")]
    Negative { name: ParamName, value: f64 },
}

pub fn default_value(name: ParamName) -> ParamValue {
    match name {
        ParamName::M | ParamName::Gain => ParamValue::Scalar(1.0),
        ParamName::K | ParamName::Z | ParamName::S => ParamValue::Scalar(0.0),
        ParamName::FK | ParamName::FZ => ParamValue::Table(Table::zero()),
    }
}

/// Checks `value` against the invariants of `name`.
pub fn check_value(name: ParamName, value: &ParamValue) -> Result<(), ValueError> {
    match (name.is_table(), value) {
        (true, ParamValue::Table(t)) => Ok(t.check()?),
        (true, ParamValue::Scalar(_)) => Err(ValueError::WrongType { name, expected: "a table" }),
        (false, ParamValue::Table(_)) => Err(ValueError::WrongType { name, expected: "a number" }),
        (false, ParamValue::Scalar(v)) => {
            let v = *v;
            if !v.is_finite() {
                return Err(ValueError::NotFinite { name });
            }
            match name {
                ParamName::M if v <= 0.0 => Err(ValueError::NonPositiveInertia(v)),
                ParamName::K if v < 0.0 => Err(ValueError::Negative { name, value: v }),
                _ => Ok(()),
            }
        }
    }
}

/// Parameter set of a module, holding exactly the names legal for its kind.
pub type ParamMap = std::collections::BTreeMap<ParamName, ParamValue>;

pub fn defaults_for(kind: ModuleKind) -> ParamMap {
    kind.legal_params().iter().map(|&p| (p, default_value(p))).collect()
}
