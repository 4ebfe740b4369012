use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Points closer than this to a validity boundary are rejected.
pub const BOUNDARY_MARGIN: f64 = 1e-6;

type MarginFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One inequality `margin(x) > 0` describing part of the chart's domain.
#[derive(Clone)]
pub struct Constraint {
    label: String,
    margin: MarginFn,
}

impl Constraint {
    pub fn new(label: impl Into<String>, margin: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Constraint {
            label: label.into(),
            margin: Arc::new(margin),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// Coordinate chart: labels, an optional designated time coordinate and a
/// validity region given as the intersection of `margin > 0` constraints.
#[derive(Clone)]
pub struct ChartDomain {
    names: Vec<String>,
    time_index: Option<usize>,
    constraints: Vec<Constraint>,
}

impl fmt::Debug for ChartDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartDomain")
            .field("names", &self.names)
            .field("time_index", &self.time_index)
            .field(
                "constraints",
                &self.constraints.iter().map(|c| c.label.as_str()).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl ChartDomain {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::Dimension(format!(
                "chart dimension must be at least 2, got {}",
                names.len()
            )));
        }
        Ok(ChartDomain {
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            time_index: None,
            constraints: Vec::new(),
        })
    }

    pub fn with_time(mut self, index: usize) -> Self {
        assert!(index < self.names.len(), "time index out of range");
        self.time_index = Some(index);
        self
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraints.push(constraint);
        self
    }

    pub fn dimension(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn time_index(&self) -> Option<usize> {
        self.time_index
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Smallest constraint margin at `x`; `+inf` for an unconstrained chart
    /// and `-inf` for malformed input (wrong length or NaN).
    pub fn margin(&self, x: &[f64]) -> f64 {
        if x.len() != self.names.len() || x.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let mut m = f64::INFINITY;
        for c in &self.constraints {
            let v = (c.margin)(x);
            if v.is_nan() {
                return f64::NEG_INFINITY;
            }
            m = m.min(v);
        }
        m
    }

    /// Total validity predicate: never errors, never panics.
    pub fn is_valid(&self, x: &[f64]) -> bool {
        self.margin(x) > BOUNDARY_MARGIN
    }

    pub fn require(&self, x: &[f64]) -> Result<()> {
        let margin = self.margin(x);
        if margin > BOUNDARY_MARGIN {
            Ok(())
        } else {
            Err(Error::OutsideChart {
                point: x.to_vec(),
                margin,
            })
        }
    }

    /// Finite-difference stencil points only need to be strictly inside.
    pub fn admits_stencil(&self, x: &[f64]) -> bool {
        self.margin(x) > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cone() -> ChartDomain {
        ChartDomain::new(&["x4", "r"])
            .unwrap()
            .with_time(0)
            .with_constraint(Constraint::new("inside cone", |x| x[0] - x[1]))
            .with_constraint(Constraint::new("r > 0", |x| x[1]))
    }

    #[test]
    fn boundary_band_is_rejected() {
        let c = cone();
        assert!(c.is_valid(&[2.0, 1.0]));
        assert!(!c.is_valid(&[1.0 + 5e-7, 1.0]));
        assert!(c.admits_stencil(&[1.0 + 5e-7, 1.0]));
        assert!(!c.is_valid(&[0.5, 1.0]));
        assert!(matches!(c.require(&[0.5, 1.0]), Err(Error::OutsideChart { .. })));
    }

    #[test]
    fn predicate_is_total() {
        let c = cone();
        assert!(!c.is_valid(&[f64::NAN, 1.0]));
        assert!(!c.is_valid(&[2.0]));
        assert!(!c.is_valid(&[]));
    }

    #[test]
    fn rejects_one_dimensional_chart() {
        assert!(ChartDomain::new(&["t"]).is_err());
    }
}
