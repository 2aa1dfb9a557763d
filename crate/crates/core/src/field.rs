//! Scalar fields on the domain: the common currency for seed, scaling and
//! base functions and for operator inputs/outputs.

use std::fmt;
use std::sync::Arc;

/// A real-valued function of a point in the domain.
///
/// Implementations return `NaN` when they cannot produce a value; every
/// consumer that samples a field checks finiteness.
pub trait Field: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;
}

impl<F> Field for F
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

pub type SharedField = Arc<dyn Field>;

/// Wraps a closure as a [`SharedField`].
pub fn field<F>(f: F) -> SharedField
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

/// The constant function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl Field for Constant {
    fn eval(&self, _x: &[f64]) -> f64 {
        self.0
    }
}

/// `a * f + b * g`, evaluated pointwise.
pub struct LinearCombination {
    pub terms: Vec<(f64, SharedField)>,
}

impl Field for LinearCombination {
    fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.eval(x)).sum()
    }
}

impl fmt::Debug for LinearCombination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearCombination")
            .field("terms", &self.terms.len())
            .finish()
    }
}

/// Builds `sum c_i f_i` as a shared field.
pub fn combine(terms: Vec<(f64, SharedField)>) -> SharedField {
    Arc::new(LinearCombination { terms })
}
