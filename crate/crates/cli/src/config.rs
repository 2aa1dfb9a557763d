//! JSON run configuration: schema, validation and conversion into core
//! objects.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fif_core::{
    BaseFunction, ExprField, ExpressionOperator, GridPartition, Lattice, Operator, SampledFunction,
    ScalingFunction, SharedField, SolverOptions,
};
use serde::Deserialize;

use crate::error::{CliError, Result};
use crate::export;

fn default_refine_data() -> usize {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Knot list per axis.
    pub axes: Vec<Vec<f64>>,
    pub seed: SeedSpec,
    pub alpha: AlphaSpec,
    #[serde(default)]
    pub base: BaseSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub study: Option<StudyConfig>,
    #[serde(default)]
    pub operator_bounds: Option<OperatorBoundsConfig>,
    #[serde(default)]
    pub invert: Option<InvertConfig>,
    #[serde(default)]
    pub attractor: Option<AttractorConfig>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A seed given as an expression, as lattice values, or as an exported CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    Expr(String),
    Data(DataSeed),
    Csv(CsvSeed),
}

/// Row-major values on the lattice of refinement `refine` (1 = grid nodes).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSeed {
    pub values: Vec<f64>,
    #[serde(default = "default_refine_data")]
    pub refine: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSeed {
    pub csv: PathBuf,
    #[serde(default = "default_refine_data")]
    pub refine: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Constant(f64),
    Expr(AlphaExpr),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaExpr {
    pub expr: String,
    /// Declared bound on `sup |alpha|`.
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum BaseKeyword {
    Corner,
    Seed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BaseSpec {
    Keyword(BaseKeyword),
    Expr(ExprSpec),
}

impl Default for BaseSpec {
    fn default() -> Self {
        BaseSpec::Keyword(BaseKeyword::Corner)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprSpec {
    pub expr: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(String),
    Expr(OperatorExpr),
}

impl Default for OperatorSpec {
    fn default() -> Self {
        OperatorSpec::Named("corner".into())
    }
}

/// `expr` over `x1..xn`, `f` (the input) and `c` (its corner interpolant).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorExpr {
    pub expr: String,
    #[serde(default)]
    pub linear: bool,
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub refine: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            refine: d.refinement,
        }
    }
}

/// Exactly one of `alpha` (constant scalings) or `bases` (base expressions).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub bases: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBoundsConfig {
    /// Sample expressions for the norm bounds.
    #[serde(default)]
    pub samples: Vec<String>,
    /// Expression pairs for the Lipschitz bounds.
    #[serde(default)]
    pub pairs: Vec<[String; 2]>,
    /// Number of extra random smooth samples and pairs.
    #[serde(default)]
    pub random: usize,
    #[serde(default = "default_rng_seed")]
    pub rng_seed: u64,
    #[serde(default)]
    pub linearity: Option<LinearityConfig>,
}

fn default_rng_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearityConfig {
    pub f: String,
    pub g: String,
    pub c: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertConfig {
    /// Function to invert; defaults to the operator applied to the seed.
    #[serde(default)]
    pub target: Option<SeedSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttractorConfig {
    pub depth: usize,
    #[serde(default)]
    pub seed_point: Option<Vec<f64>>,
    #[serde(default)]
    pub cap: Option<usize>,
}

/// Command-line overrides of the solver block.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub refine: Option<usize>,
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut cfg = parse_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

/// Parses configuration text; schema errors carry the offending field path.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::schema(path, e.into_inner())
    })
}

fn cross(fields: &str, message: impl ToString) -> CliError {
    CliError::CrossField {
        fields: fields.into(),
        message: message.to_string(),
    }
}

fn parse_expr(path: &str, src: &str, dim: usize) -> Result<ExprField> {
    ExprField::parse(src, dim).map_err(|e| CliError::schema(path, e))
}

impl RunConfig {
    /// Cross-field checks beyond the JSON schema.
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        let dim = grid.dim();
        match &self.alpha {
            AlphaSpec::Constant(a) if a.is_nan() || a.abs() >= 1.0 => {
                return Err(cross(
                    "alpha",
                    format!("|alpha| = {} must be below 1", a.abs()),
                ))
            }
            AlphaSpec::Expr(e) => {
                if !(0.0..1.0).contains(&e.bound) {
                    return Err(cross(
                        "alpha.bound",
                        format!("declared bound {} must lie in [0, 1)", e.bound),
                    ));
                }
                parse_expr("alpha.expr", &e.expr, dim)?;
            }
            _ => {}
        }
        self.check_seed_spec("seed", &self.seed, &grid)?;
        if let BaseSpec::Expr(e) = &self.base {
            parse_expr("base.expr", &e.expr, dim)?;
        }
        self.operator()?;
        let s = &self.solver;
        if s.tol.is_nan() || s.tol <= 0.0 {
            return Err(CliError::schema("solver.tol", "must be positive"));
        }
        if s.refine == 0 {
            return Err(CliError::schema("solver.refine", "must be at least 1"));
        }
        if let Some(study) = &self.study {
            if study.alpha.is_empty() == study.bases.is_empty() {
                return Err(cross(
                    "study.alpha, study.bases",
                    "exactly one of the two sequences must be given",
                ));
            }
            for (i, a) in study.alpha.iter().enumerate() {
                if a.is_nan() || a.abs() >= 1.0 {
                    return Err(cross(
                        &format!("study.alpha[{i}]"),
                        "must be below 1 in absolute value",
                    ));
                }
            }
            for (i, b) in study.bases.iter().enumerate() {
                parse_expr(&format!("study.bases[{i}]"), b, dim)?;
            }
        }
        if let Some(ob) = &self.operator_bounds {
            for (i, f) in ob.samples.iter().enumerate() {
                parse_expr(&format!("operator_bounds.samples[{i}]"), f, dim)?;
            }
            for (i, [f, g]) in ob.pairs.iter().enumerate() {
                parse_expr(&format!("operator_bounds.pairs[{i}][0]"), f, dim)?;
                parse_expr(&format!("operator_bounds.pairs[{i}][1]"), g, dim)?;
            }
            if let Some(l) = &ob.linearity {
                parse_expr("operator_bounds.linearity.f", &l.f, dim)?;
                parse_expr("operator_bounds.linearity.g", &l.g, dim)?;
            }
        }
        if let Some(InvertConfig {
            target: Some(target),
        }) = &self.invert
        {
            self.check_seed_spec("invert.target", target, &grid)?;
        }
        if let Some(a) = &self.attractor {
            if let Some(p) = &a.seed_point {
                if p.len() != dim {
                    return Err(CliError::schema(
                        "attractor.seed_point",
                        format!("expected {dim} coordinates, got {}", p.len()),
                    ));
                }
                grid.check_point(p)
                    .map_err(|e| cross("attractor.seed_point, axes", e))?;
            }
        }
        Ok(())
    }

    fn check_seed_spec(&self, path: &str, spec: &SeedSpec, grid: &GridPartition) -> Result<()> {
        match spec {
            SeedSpec::Expr(src) => parse_expr(path, src, grid.dim()).map(|_| ()),
            SeedSpec::Data(d) => {
                if d.refine == 0 {
                    return Err(CliError::schema(
                        format!("{path}.refine"),
                        "must be at least 1",
                    ));
                }
                let expected = Lattice::new(grid.clone(), d.refine)?.len();
                if d.values.len() != expected {
                    return Err(CliError::schema(
                        format!("{path}.values"),
                        format!(
                            "expected {expected} values for refinement {}, got {}",
                            d.refine,
                            d.values.len()
                        ),
                    ));
                }
                if let Some(i) = d.values.iter().position(|v| !v.is_finite()) {
                    return Err(CliError::schema(
                        format!("{path}.values[{i}]"),
                        "not finite",
                    ));
                }
                Ok(())
            }
            SeedSpec::Csv(c) => {
                if c.refine == 0 {
                    return Err(CliError::schema(
                        format!("{path}.refine"),
                        "must be at least 1",
                    ));
                }
                Ok(())
            }
        }
    }

    pub fn grid(&self) -> Result<GridPartition> {
        if self.axes.is_empty() {
            return Err(CliError::schema("axes", "at least one axis is required"));
        }
        GridPartition::from_knots(self.axes.clone()).map_err(|e| cross("axes", e))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The seed (or another data-capable spec) as a field.
    pub fn field_of(&self, spec: &SeedSpec, grid: &GridPartition) -> Result<SharedField> {
        Ok(match spec {
            SeedSpec::Expr(src) => Arc::new(parse_expr("seed", src, grid.dim())?),
            SeedSpec::Data(d) => {
                let lattice = Arc::new(Lattice::new(grid.clone(), d.refine)?);
                Arc::new(SampledFunction::from_values(lattice, d.values.clone())?)
            }
            SeedSpec::Csv(c) => {
                let lattice = Arc::new(Lattice::new(grid.clone(), c.refine)?);
                Arc::new(export::read_samples(&self.resolve(&c.csv), lattice)?)
            }
        })
    }

    pub fn seed_field(&self, grid: &GridPartition) -> Result<SharedField> {
        self.field_of(&self.seed, grid)
    }

    pub fn scaling(&self, dim: usize) -> Result<ScalingFunction> {
        Ok(match &self.alpha {
            AlphaSpec::Constant(a) => ScalingFunction::constant(*a)?,
            AlphaSpec::Expr(e) => {
                let field = parse_expr("alpha.expr", &e.expr, dim)?;
                // constant expressions get the exact constant path
                match field.expr().as_constant() {
                    Some(c) if c.abs() <= e.bound => ScalingFunction::constant(c)?,
                    _ => ScalingFunction::new(Arc::new(field), e.bound)?,
                }
            }
        })
    }

    pub fn base(&self, dim: usize) -> Result<BaseFunction> {
        Ok(match &self.base {
            BaseSpec::Keyword(BaseKeyword::Corner) => BaseFunction::Corner,
            BaseSpec::Keyword(BaseKeyword::Seed) => BaseFunction::Seed,
            BaseSpec::Expr(e) => {
                BaseFunction::Custom(Arc::new(parse_expr("base.expr", &e.expr, dim)?))
            }
        })
    }

    pub fn operator(&self) -> Result<Arc<dyn Operator>> {
        let dim = self.axes.len();
        match &self.operator {
            OperatorSpec::Named(name) => fif_core::builtin_operator(name).ok_or_else(|| {
                CliError::schema(
                    "operator",
                    format!("unknown operator `{name}` (identity, corner, reflection, zero)"),
                )
            }),
            OperatorSpec::Expr(e) => {
                let op = ExpressionOperator::parse(&e.expr, dim, e.linear, e.lipschitz)
                    .map_err(|err| CliError::schema("operator.expr", err))?;
                Ok(Arc::new(op))
            }
        }
    }

    pub fn solver_options(&self, o: &Overrides) -> Result<SolverOptions> {
        let opts = SolverOptions {
            tol: o.tol.unwrap_or(self.solver.tol),
            max_iter: o.max_iter.unwrap_or(self.solver.max_iter),
            refinement: o.refine.unwrap_or(self.solver.refine),
            ..SolverOptions::default()
        };
        if opts.tol.is_nan() || opts.tol <= 0.0 {
            return Err(CliError::Usage("--tol must be positive".into()));
        }
        if opts.refinement == 0 {
            return Err(CliError::Usage("--refine must be at least 1".into()));
        }
        Ok(opts)
    }

    /// Parses an expression in the configuration's dimension.
    pub fn expr_field(&self, path: &str, src: &str) -> Result<SharedField> {
        Ok(Arc::new(parse_expr(path, src, self.axes.len())?))
    }
}
