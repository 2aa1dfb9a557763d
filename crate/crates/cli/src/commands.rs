//! The subcommands: each reads a validated configuration, prints a
//! human-readable report and writes machine-readable artifacts.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fif_core::{
    apply_fractal_operator, build_alpha_system, check_base_corners, check_perturbation_bounds,
    construct_alpha_fractal, convergence_study, estimate_operator_norms, estimate_y_contraction,
    invert_fractal_operator, random_fields, sample_attractor, self_referential_residual,
    shared_face_probes, sup_distance, verify_data_constraints, verify_linearity,
    verify_matching_conditions, verify_relative_bounds, well_definedness_residual,
    AlphaFractalResult, Lattice, MatchingOptions, SampledFunction, SharedField, SolveDiagnostics,
    StudySequence, ATTRACTOR_POINT_CAP,
};
use serde_json::{json, Value};

use crate::config::{Overrides, RunConfig};
use crate::error::{CliError, Result};
use crate::export;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Construct,
    Verify,
    Study,
    OperatorBounds,
    Invert,
    Attractor,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Construct => "construct",
            Command::Verify => "verify",
            Command::Study => "study",
            Command::OperatorBounds => "operator-bounds",
            Command::Invert => "invert",
            Command::Attractor => "attractor",
        }
    }

    fn needs_output(self) -> bool {
        self != Command::Verify
    }
}

/// Number of shared-face probes used by `verify`.
const FACE_PROBES: usize = 200;
/// Number of random smooth samples used when no operator block is given.
const DEFAULT_RANDOM_SAMPLES: usize = 5;

pub fn run_command(
    cmd: Command,
    cfg: &RunConfig,
    out_dir: Option<&Path>,
    overrides: &Overrides,
    stdout: &mut dyn Write,
) -> Result<()> {
    let out = match (cmd.needs_output(), out_dir) {
        (true, None) => {
            return Err(CliError::Usage(format!(
                "`{}` needs an output directory (-o <dir>)",
                cmd.name()
            )))
        }
        (_, Some(dir)) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            Some(dir.to_path_buf())
        }
        (false, None) => None,
    };
    let ctx = Context::new(cfg, overrides, out)?;
    let mut w = Printer(stdout);
    match cmd {
        Command::Construct => construct(&ctx, &mut w),
        Command::Verify => verify(&ctx, &mut w),
        Command::Study => study(&ctx, &mut w),
        Command::OperatorBounds => operator_bounds(&ctx, &mut w),
        Command::Invert => invert(&ctx, &mut w),
        Command::Attractor => attractor(&ctx, &mut w),
    }
}

/// Report writer; failures to write to standard output are ignored.
struct Printer<'a>(&'a mut dyn Write);

impl Printer<'_> {
    fn line(&mut self, s: impl AsRef<str>) {
        let _ = writeln!(self.0, "{}", s.as_ref());
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    grid: fif_core::GridPartition,
    seed: SharedField,
    scaling: fif_core::ScalingFunction,
    base: fif_core::BaseFunction,
    options: fif_core::SolverOptions,
    out: Option<PathBuf>,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a RunConfig, overrides: &Overrides, out: Option<PathBuf>) -> Result<Self> {
        let grid = cfg.grid()?;
        let dim = grid.dim();
        Ok(Self {
            seed: cfg.seed_field(&grid)?,
            scaling: cfg.scaling(dim)?,
            base: cfg.base(dim)?,
            options: cfg.solver_options(overrides)?,
            grid,
            cfg,
            out,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.as_ref().expect("output directory").join(name)
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<PathBuf> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::to_writer_pretty(file, value)
            .map_err(|e| CliError::io(&path, std::io::Error::other(e)))?;
        Ok(path)
    }

    fn lattice(&self) -> Result<Arc<Lattice>> {
        Ok(Arc::new(Lattice::new(
            self.grid.clone(),
            self.options.refinement,
        )?))
    }
}

fn diagnostics_json(d: &SolveDiagnostics) -> Value {
    json!({
        "iterations": d.iterations,
        "final_change": d.final_change,
        "contraction": d.contraction,
        "a_posteriori_bound": d.a_posteriori_bound,
        "node_residual_before_pinning": d.node_residual,
        "refinement": d.refinement,
        "lattice_points": d.lattice_points,
        "fitted_rate": d.fitted_rate(),
        "residual_history": d.residual_history,
    })
}

fn solve_summary(w: &mut Printer, d: &SolveDiagnostics) {
    w.line(format!(
        "solved in {} iterations: last change {:.3e}, contraction {:.4}, error bound {:.3e}",
        d.iterations, d.final_change, d.contraction, d.a_posteriori_bound
    ));
    w.line(format!(
        "lattice: refinement {} per cell, {} points",
        d.refinement, d.lattice_points
    ));
}

fn construct(ctx: &Context, w: &mut Printer) -> Result<()> {
    let r = construct_alpha_fractal(&ctx.seed, &ctx.grid, &ctx.scaling, &ctx.base, &ctx.options)?;
    solve_summary(w, &r.diagnostics);
    w.line(format!(
        "node interpolation residual: {:.3e}",
        r.node_residual()
    ));
    let csv = ctx.path("fractal.csv");
    export::save_samples(&csv, &r.function)?;
    let mut diag = diagnostics_json(&r.diagnostics);
    diag["scaling_norm"] = json!(r.scaling_norm());
    diag["node_residual"] = json!(r.node_residual());
    diag["sup_norm"] = json!(r.function.sup_norm());
    let json_path = ctx.write_json("diagnostics.json", &diag)?;
    w.line(format!(
        "wrote {} and {}",
        csv.display(),
        json_path.display()
    ));
    Ok(())
}

/// Accumulates PASS/FAIL lines.
struct Checks<'p, 'a> {
    w: &'p mut Printer<'a>,
    failed: usize,
}

impl Checks<'_, '_> {
    fn record(&mut self, name: &str, outcome: std::result::Result<String, String>) -> bool {
        match outcome {
            Ok(detail) => {
                self.w.line(format!("PASS  {name}: {detail}"));
                true
            }
            Err(detail) => {
                self.failed += 1;
                self.w.line(format!("FAIL  {name}: {detail}"));
                false
            }
        }
    }

    /// Records a core result; non-verification errors are propagated.
    fn core<T>(
        &mut self,
        name: &str,
        r: fif_core::Result<T>,
        detail: impl FnOnce(&T) -> String,
    ) -> Result<Option<T>> {
        match r {
            Ok(v) => {
                let d = detail(&v);
                self.record(name, Ok(d));
                Ok(Some(v))
            }
            Err(e) if e.is_verification_failure() => {
                self.record(name, Err(e.to_string()));
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }

    fn finish(self) -> Result<()> {
        if self.failed == 0 {
            self.w.line("all checks passed");
            Ok(())
        } else {
            Err(CliError::ChecksFailed(self.failed))
        }
    }
}

fn threshold(name: &str, value: f64, limit: f64) -> std::result::Result<String, String> {
    let text = format!("{name} {value:.3e} (limit {limit:.1e})");
    if value <= limit {
        Ok(text)
    } else {
        Err(text)
    }
}

fn verify(ctx: &Context, w: &mut Printer) -> Result<()> {
    let mut checks = Checks { w, failed: 0 };
    let base = ctx.base.resolve(&ctx.seed, &ctx.grid);
    let corners = check_base_corners(ctx.seed.as_ref(), base.as_ref(), &ctx.grid);
    if checks
        .core(
            "base agrees with the seed at the domain corners",
            corners,
            |r| format!("max residual {r:.3e}"),
        )?
        .is_none()
    {
        return checks.finish();
    }
    let lattice = ctx.lattice()?;
    let cert = checks.core(
        "scaling function within its declared bound",
        ctx.scaling.certify(&lattice),
        |c| {
            format!(
                "lattice max {:.6} <= declared {:.6}",
                c.lattice_max,
                ctx.scaling.declared_bound()
            )
        },
    )?;
    if cert.is_none() {
        return checks.finish();
    }
    let system = build_alpha_system(&ctx.seed, &ctx.scaling, &base, &ctx.grid)?;
    checks.core(
        "vertical maps reproduce the data at cell corners",
        verify_data_constraints(&system),
        |r| format!("{} checks, max residual {:.3e}", r.checks, r.max_residual),
    )?;
    checks.core(
        "adjacent vertical maps agree on shared faces",
        verify_matching_conditions(&system, MatchingOptions::default()),
        |r| {
            format!(
                "{} faces, {} checks, max residual {:.3e}",
                r.faces, r.checks, r.max_residual
            )
        },
    )?;
    checks.core(
        "vertical maps contract in y",
        estimate_y_contraction(&system, 200, 7),
        |r| {
            format!(
                "observed {:.6} <= declared {:.6}",
                r.max_observed,
                system.gamma_max()
            )
        },
    )?;
    if checks.failed > 0 {
        return checks.finish();
    }

    let r = construct_alpha_fractal(&ctx.seed, &ctx.grid, &ctx.scaling, &ctx.base, &ctx.options)?;
    solve_summary(checks.w, &r.diagnostics);
    checks.record(
        "fractal function interpolates the seed at every node",
        threshold("max residual", r.node_residual(), 1e-9),
    );
    let probes = shared_face_probes(&ctx.grid, FACE_PROBES, 11);
    let spread = well_definedness_residual(&r.system, &r.function, &probes)?;
    checks.record(
        "operator values agree across shared faces",
        threshold(
            &format!("{} probes, max spread", probes.len()),
            spread,
            1e-10,
        ),
    );
    let lattice = r.function.lattice();
    let stride = (lattice.len() / 2000).max(1);
    let lattice_probes: Vec<Vec<f64>> = (0..lattice.len())
        .step_by(stride)
        .map(|p| lattice.point(p))
        .collect();
    let residual = self_referential_residual(&r.function, &r.system, &lattice_probes)?;
    let d = &r.diagnostics;
    let allowance = (1.0 + d.contraction) * (d.a_posteriori_bound + d.node_residual) + 1e-12;
    checks.record(
        "self-referential equation holds on the lattice",
        threshold("max residual", residual, allowance),
    );
    checks.core("perturbation bounds", check_perturbation_bounds(&r), |p| {
        format!(
            "|f^a - f| = {:.6e} <= {:.6e} (scaling times fractal-to-base gap) and <= {:.6e} (scaling ratio times seed-to-base gap {:.6e})",
            p.seed_distance,
            p.fractal_base.rhs + p.fractal_base.allowance,
            p.seed_base.rhs + p.seed_base.allowance,
            p.seed_base_gap
        )
    })?;
    checks.finish()
}

fn study(ctx: &Context, w: &mut Printer) -> Result<()> {
    let block = ctx
        .cfg
        .study
        .as_ref()
        .ok_or_else(|| CliError::Usage("`study` needs a `study` block in the config".into()))?;
    let sequence = if !block.alpha.is_empty() {
        StudySequence::Scalings(
            block
                .alpha
                .iter()
                .map(|&a| fif_core::ScalingFunction::constant(a))
                .collect::<fif_core::Result<_>>()?,
        )
    } else {
        StudySequence::Bases(
            block
                .bases
                .iter()
                .enumerate()
                .map(|(i, b)| ctx.cfg.expr_field(&format!("study.bases[{i}]"), b))
                .collect::<Result<_>>()?,
        )
    };
    let varies = if matches!(sequence, StudySequence::Scalings(_)) {
        "scaling_norm"
    } else {
        "seed_base_gap"
    };
    let rows = convergence_study(
        &ctx.seed,
        &ctx.grid,
        &ctx.scaling,
        &ctx.base,
        &sequence,
        &ctx.options,
    )?;
    let path = ctx.path("study.csv");
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.clone(),
        message: e.to_string(),
    };
    csv.write_record(["index", varies, "error", "bound", "iterations"])
        .map_err(csv_err)?;
    w.line(format!(
        "{:>5}  {:>14}  {:>14}  {:>14}",
        "index", varies, "error", "bound"
    ));
    for r in &rows {
        csv.write_record([
            r.index.to_string(),
            export::format_value(r.parameter),
            export::format_value(r.error),
            export::format_value(r.bound),
            r.iterations.to_string(),
        ])
        .map_err(csv_err)?;
        w.line(format!(
            "{:>5}  {:>14.6e}  {:>14.6e}  {:>14.6e}",
            r.index, r.parameter, r.error, r.bound
        ));
    }
    csv.flush().map_err(|e| CliError::io(&path, e))?;
    w.line(format!(
        "every error is within its bound; wrote {}",
        path.display()
    ));
    Ok(())
}

fn operator_bounds(ctx: &Context, w: &mut Printer) -> Result<()> {
    let op = ctx.cfg.operator()?;
    let dim = ctx.grid.dim();
    let (samples_src, pairs_src, random, rng_seed, linearity) = match &ctx.cfg.operator_bounds {
        Some(b) => (
            b.samples.clone(),
            b.pairs.clone(),
            b.random,
            b.rng_seed,
            b.linearity.clone(),
        ),
        None => (Vec::new(), Vec::new(), DEFAULT_RANDOM_SAMPLES, 1, None),
    };
    let mut samples: Vec<SharedField> = samples_src
        .iter()
        .enumerate()
        .map(|(i, s)| {
            ctx.cfg
                .expr_field(&format!("operator_bounds.samples[{i}]"), s)
        })
        .collect::<Result<_>>()?;
    samples.extend(random_fields(dim, random, rng_seed));
    let mut pairs: Vec<(SharedField, SharedField)> = pairs_src
        .iter()
        .enumerate()
        .map(|(i, [f, g])| {
            Ok((
                ctx.cfg
                    .expr_field(&format!("operator_bounds.pairs[{i}][0]"), f)?,
                ctx.cfg
                    .expr_field(&format!("operator_bounds.pairs[{i}][1]"), g)?,
            ))
        })
        .collect::<Result<_>>()?;
    let extra = random_fields(dim, 2 * random, rng_seed.wrapping_add(1));
    pairs.extend(extra.chunks(2).map(|c| (c[0].clone(), c[1].clone())));
    if samples.is_empty() && pairs.is_empty() {
        return Err(CliError::Usage(
            "operator_bounds needs samples, pairs or random > 0".into(),
        ));
    }

    let report = verify_relative_bounds(
        op.as_ref(),
        &ctx.scaling,
        &ctx.grid,
        &samples,
        &pairs,
        &ctx.options,
    )?;
    let mut everything = samples.clone();
    everything.extend(pairs.iter().flat_map(|(f, g)| [f.clone(), g.clone()]));
    let norms =
        estimate_operator_norms(op.as_ref(), &everything, &ctx.grid, ctx.options.refinement)?;
    w.line(format!(
        "operator `{}`, scaling norm {:.6}",
        op.name(),
        report.scaling_norm
    ));
    w.line(format!(
        "relative norm bound holds on {} samples; relative Lipschitz bound on {} pairs",
        report.relative_bounds.len(),
        report.relative_lipschitz.len()
    ));
    w.line(format!(
        "Lipschitz constant of the fractal operator: observed {:.6} <= bound {:.6}",
        report.fractal_lipschitz_estimate, report.fractal_lipschitz_bound
    ));
    let declared = report
        .declared_lipschitz
        .map_or_else(|| "none".to_string(), |l| format!("{l:.6}"));
    w.line(format!(
        "base operator: Lipschitz declared {declared}, estimated {:.6}; norm bound {:.6}, quasibound {:.6}",
        report.estimated_lipschitz, norms.norm_bound, norms.quasibound
    ));

    let mut linear_json = Value::Null;
    if let Some(l) = linearity {
        let f = ctx.cfg.expr_field("operator_bounds.linearity.f", &l.f)?;
        let g = ctx.cfg.expr_field("operator_bounds.linearity.g", &l.g)?;
        let lr = verify_linearity(
            op.as_ref(),
            &ctx.scaling,
            &ctx.grid,
            &f,
            &g,
            l.c,
            &ctx.options,
        )?;
        w.line(format!(
            "linearity residual {:.3e} <= {:.3e}",
            lr.residual, lr.allowance
        ));
        linear_json = json!({"residual": lr.residual, "allowance": lr.allowance});
    }

    let checks = |v: &[fif_core::BoundCheck]| -> Value {
        v.iter()
            .map(|c| json!({"lhs": c.lhs, "rhs": c.rhs, "allowance": c.allowance, "slack": c.slack()}))
            .collect()
    };
    let path = ctx.write_json(
        "operator_bounds.json",
        &json!({
            "operator": op.name(),
            "refinement": report.refinement,
            "scaling_norm": report.scaling_norm,
            "declared_lipschitz": report.declared_lipschitz,
            "estimated_lipschitz": report.estimated_lipschitz,
            "fractal_lipschitz_estimate": report.fractal_lipschitz_estimate,
            "fractal_lipschitz_bound": report.fractal_lipschitz_bound,
            "norm_bound_estimate": norms.norm_bound,
            "quasibound_estimate": norms.quasibound,
            "quasibound_ratios": norms.ratios,
            "relative_bounds": checks(&report.relative_bounds),
            "relative_lipschitz": checks(&report.relative_lipschitz),
            "lipschitz": checks(&report.lipschitz),
            "norm_transfer": checks(std::slice::from_ref(&report.norm_transfer)),
            "linearity": linear_json,
        }),
    )?;
    w.line(format!("wrote {}", path.display()));
    Ok(())
}

fn invert(ctx: &Context, w: &mut Printer) -> Result<()> {
    let op = ctx.cfg.operator()?;
    let lattice = ctx.lattice()?;
    let given = ctx.cfg.invert.as_ref().and_then(|i| i.target.as_ref());
    let (target, forward): (SampledFunction, Option<AlphaFractalResult>) = match given {
        Some(spec) => {
            let field = ctx.cfg.field_of(spec, &ctx.grid)?;
            (
                SampledFunction::from_field(lattice.clone(), field.as_ref())?,
                None,
            )
        }
        None => {
            let r = apply_fractal_operator(
                op.as_ref(),
                &ctx.scaling,
                &ctx.grid,
                &ctx.seed,
                &ctx.options,
            )?;
            w.line("target: the fractal operator applied to the seed");
            (r.function.clone(), Some(r))
        }
    };
    let inv = invert_fractal_operator(&target, op.as_ref(), &ctx.scaling, &ctx.options)?;
    w.line(format!(
        "inverse iteration: {} iterations, last change {:.3e}, contraction {:.4}",
        inv.iterations, inv.final_change, inv.contraction
    ));
    w.line(format!(
        "forward residual of the recovered seed: {:.3e}",
        inv.residual
    ));
    match inv.inverse_lipschitz_bound {
        Some(b) => w.line(format!(
            "certified bilipschitz; inverse Lipschitz bound {b:.6}"
        )),
        None => {
            w.line("not certified bilipschitz (scaling norm too large for the operator's constant)")
        }
    }
    let mut round_trip = Value::Null;
    if forward.is_some() {
        let seed = SampledFunction::from_field(lattice, ctx.seed.as_ref())?;
        let err = sup_distance(&inv.seed, &seed)?;
        w.line(format!("round-trip error against the seed: {err:.3e}"));
        round_trip = json!(err);
    }
    let csv = ctx.path("recovered.csv");
    export::save_samples(&csv, &inv.seed)?;
    let json_path = ctx.write_json(
        "inverse.json",
        &json!({
            "iterations": inv.iterations,
            "final_change": inv.final_change,
            "contraction": inv.contraction,
            "forward_residual": inv.residual,
            "bilipschitz_certified": inv.bilipschitz_certified,
            "inverse_lipschitz_bound": inv.inverse_lipschitz_bound,
            "round_trip_error": round_trip,
        }),
    )?;
    w.line(format!(
        "wrote {} and {}",
        csv.display(),
        json_path.display()
    ));
    Ok(())
}

fn attractor(ctx: &Context, w: &mut Printer) -> Result<()> {
    let block = ctx.cfg.attractor.as_ref().ok_or_else(|| {
        CliError::Usage("`attractor` needs an `attractor` block in the config".into())
    })?;
    let base = ctx.base.resolve(&ctx.seed, &ctx.grid);
    let system = build_alpha_system(&ctx.seed, &ctx.scaling, &base, &ctx.grid)?;
    let points = sample_attractor(
        &system,
        block.depth,
        block.seed_point.as_deref(),
        block.cap.unwrap_or(ATTRACTOR_POINT_CAP),
    )?;
    let r = construct_alpha_fractal(&ctx.seed, &ctx.grid, &ctx.scaling, &ctx.base, &ctx.options)?;
    let deviation = points
        .iter()
        .map(|p| (p.y - r.function.eval_unchecked(&p.x)).abs())
        .fold(0.0, f64::max);
    w.line(format!("{} points at depth {}", points.len(), block.depth));
    w.line(format!(
        "max deviation from the solved function (refinement {}): {deviation:.3e}",
        r.diagnostics.refinement
    ));
    let csv = ctx.path("attractor.csv");
    export::save_points(&csv, ctx.grid.dim(), &points)?;
    w.line(format!("wrote {}", csv.display()));
    Ok(())
}
