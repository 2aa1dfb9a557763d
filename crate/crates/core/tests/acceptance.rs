//! Acceptance suite: runs every criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits non-zero if any criterion fails.

use std::time::Instant;

use fif_core::{
    apply_fractal_operator, check_perturbation_bounds, construct_alpha_fractal, field,
    invert_fractal_operator, random_fields, sample_attractor, shared_face_probes, solve_fif,
    sup_distance, verify_linearity, verify_relative_bounds, well_definedness_residual,
    AlphaFractalResult, BaseFunction, CornerInterpolation, GridPartition, Identity, Lattice,
    RbOperator, SampledFunction, ScalingFunction, SharedField, SolverOptions, ATTRACTOR_POINT_CAP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit_grid() -> GridPartition {
    GridPartition::from_knots(vec![vec![0.0, 0.5, 1.0]]).unwrap()
}

fn square() -> SharedField {
    field(|x: &[f64]| x[0] * x[0])
}

fn opts(m: usize) -> SolverOptions {
    SolverOptions::default().with_refinement(m)
}

/// A randomized construction: grid, seed, scaling and base.
struct Instance {
    grid: GridPartition,
    seed: SharedField,
    scaling: ScalingFunction,
    base: BaseFunction,
    refinement: usize,
    label: String,
}

fn random_axis(rng: &mut ChaCha8Rng, cells: usize) -> Vec<f64> {
    let start = rng.gen_range(-1.0..1.0);
    let mut knots = vec![start];
    for _ in 0..cells {
        let last = *knots.last().unwrap();
        knots.push(last + rng.gen_range(0.2..1.0));
    }
    knots
}

fn random_instance(rng: &mut ChaCha8Rng, dim: usize, index: usize) -> Instance {
    let max_cells = if dim == 3 { 3 } else { 4 };
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|_| {
            let cells = rng.gen_range(2..=max_cells);
            random_axis(rng, cells)
        })
        .collect();
    let grid = GridPartition::from_knots(axes).unwrap();
    let seed = random_fields(dim, 1, rng.gen()).pop().unwrap();
    let scaling = if rng.gen_bool(0.5) {
        ScalingFunction::constant(rng.gen_range(-0.9..0.9)).unwrap()
    } else {
        let (a, w) = (rng.gen_range(0.1..0.4), rng.gen_range(0.5..3.0));
        let s = field(move |x: &[f64]| a + 0.3 * (w * x.iter().sum::<f64>()).sin());
        ScalingFunction::new(s, a + 0.3).unwrap()
    };
    let base = match index % 3 {
        0 => BaseFunction::Corner,
        1 => BaseFunction::Seed,
        _ => {
            // corner interpolant plus a bump vanishing at every domain corner
            let corner = fif_core::make_corner_base(&seed, &grid);
            let ends: Vec<(f64, f64)> = grid.axes().iter().map(|a| (a.start(), a.end())).collect();
            BaseFunction::Custom(field(move |x: &[f64]| {
                let bump: f64 = x
                    .iter()
                    .zip(&ends)
                    .map(|(x, (a, b))| (x - a) * (b - x))
                    .product();
                corner.eval(x) + 0.5 * bump * (3.0 * x[0]).cos()
            }))
        }
    };
    let refinement = match dim {
        1 => 64,
        2 => 16,
        _ => 6,
    };
    Instance {
        label: format!("{dim}D cells {:?}", grid.cell_shape()),
        grid,
        seed,
        scaling,
        base,
        refinement,
    }
}

fn randomized_suite() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let dims = [1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3, 3];
    dims.iter()
        .enumerate()
        .map(|(i, &d)| random_instance(&mut rng, d, i))
        .collect()
}

fn solve(inst: &Instance) -> AlphaFractalResult {
    construct_alpha_fractal(
        &inst.seed,
        &inst.grid,
        &inst.scaling,
        &inst.base,
        &opts(inst.refinement),
    )
    .unwrap_or_else(|e| panic!("{}: {e}", inst.label))
}

fn node_interpolation(suite: &[(Instance, AlphaFractalResult)], started: Instant) -> Outcome {
    let mut worst: f64 = 0.0;
    for (_, r) in suite {
        worst = worst
            .max(r.diagnostics.node_residual)
            .max(r.node_residual());
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        worst <= 1e-9 && secs < 30.0,
        format!(
            "max node residual {worst:.2e} before pinning over {} instances (1D/2D/3D), {secs:.2} s",
            suite.len()
        ),
    )
}

fn contraction(suite: &[(Instance, AlphaFractalResult)]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut pairs = 0;
    for (_, r) in suite {
        let lattice = r.function.lattice().clone();
        let op = RbOperator::new(&r.system, lattice.clone()).unwrap();
        let gamma = r.system.gamma_max();
        let n = lattice.len();
        let mut tg = vec![0.0; n];
        let mut th = vec![0.0; n];
        for _ in 0..100 {
            let scale = rng.gen_range(0.1..10.0);
            let g: Vec<f64> = (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..n).map(|_| scale * rng.gen_range(-1.0..1.0)).collect();
            op.apply_into(&g, &mut tg);
            op.apply_into(&h, &mut th);
            let lhs = tg
                .iter()
                .zip(&th)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let rhs = g
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst_excess = worst_excess.max(lhs - gamma * rhs);
            pairs += 1;
        }
    }
    check(
        worst_excess <= 1e-12,
        format!("{pairs} random pairs, max of sup|Tg-Th| - gamma sup|g-h| = {worst_excess:.2e}"),
    )
}

fn well_definedness(suite: &[(Instance, AlphaFractalResult)]) -> Outcome {
    let multi: Vec<&(Instance, AlphaFractalResult)> =
        suite.iter().filter(|(i, _)| i.grid.dim() > 1).collect();
    let per = 200usize.div_ceil(multi.len());
    let mut worst: f64 = 0.0;
    let mut probes_used = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (k, (inst, r)) in multi.iter().enumerate() {
        let probes = shared_face_probes(&inst.grid, per, k as u64);
        probes_used += probes.len();
        worst = worst.max(well_definedness_residual(&r.system, &r.function, &probes).unwrap());
        let lattice = r.function.lattice().clone();
        let g: Vec<f64> = (0..lattice.len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let g = SampledFunction::from_values(lattice, g).unwrap();
        worst = worst.max(well_definedness_residual(&r.system, &g, &probes).unwrap());
    }
    check(
        probes_used >= 200 && worst <= 1e-10,
        format!(
            "{probes_used} shared-face probes, solved and random inputs, max spread {worst:.2e}"
        ),
    )
}

fn desk_check() -> Outcome {
    // hand recursion from the node values 0, 0.25, 1 and b(x) = x
    let oracle_quarter = 0.25f64.powi(2) + 0.4 * (0.25 - 0.5);
    let oracle_three_quarters = 0.75f64.powi(2) + 0.4 * (0.25 - 0.5);
    let mut worst: f64 = 0.0;
    for m in [64, 128] {
        let r = construct_alpha_fractal(
            &square(),
            &unit_grid(),
            &ScalingFunction::constant(0.4).unwrap(),
            &BaseFunction::Corner,
            &opts(m),
        )
        .unwrap();
        worst = worst
            .max((r.function.eval(&[0.25]).unwrap() - oracle_quarter).abs())
            .max((r.function.eval(&[0.75]).unwrap() - oracle_three_quarters).abs());
    }
    check(
        worst <= 1e-6 && (oracle_quarter + 0.0375).abs() < 1e-15,
        format!("values at 0.25 and 0.75 within {worst:.2e} of -0.0375 and 0.4625 at m = 64, 128"),
    )
}

fn perturbation_bounds(suite: &[(Instance, AlphaFractalResult)]) -> Outcome {
    let mut min_slack = f64::INFINITY;
    for (inst, r) in suite {
        match check_perturbation_bounds(r) {
            Ok(p) => {
                min_slack = min_slack
                    .min(p.fractal_base.slack())
                    .min(p.seed_base.slack())
            }
            Err(e) => return Err(format!("{}: {e}", inst.label)),
        }
    }
    let r = construct_alpha_fractal(
        &square(),
        &unit_grid(),
        &ScalingFunction::constant(0.4).unwrap(),
        &BaseFunction::Corner,
        &opts(128),
    )
    .unwrap();
    let p = check_perturbation_bounds(&r).map_err(|e| e.to_string())?;
    let desk_ok =
        p.seed_distance <= 1.0 / 6.0 + 1e-6 && (p.seed_base.rhs - 1.0 / 6.0).abs() < 1e-12;
    check(
        desk_ok,
        format!(
            "both bounds hold on {} instances (min slack {min_slack:.2e}); desk instance |f^a - f| = {:.6} <= 1/6",
            suite.len(),
            p.seed_distance
        ),
    )
}

fn scaling_sequence() -> Outcome {
    let mut pts = Vec::new();
    let mut all_bounded = true;
    for m in 1..=6 {
        let a = 0.5f64.powi(m);
        let r = construct_alpha_fractal(
            &square(),
            &unit_grid(),
            &ScalingFunction::constant(a).unwrap(),
            &BaseFunction::Corner,
            &opts(128),
        )
        .unwrap();
        let f =
            SampledFunction::from_field(r.function.lattice().clone(), square().as_ref()).unwrap();
        let err = sup_distance(&r.function, &f).unwrap();
        all_bounded &= err <= a / (1.0 - a) * 0.25 + 1e-12;
        pts.push((m as f64, err.ln()));
    }
    let slope = fif_core::rb::log_slope(&pts).unwrap();
    check(
        all_bounded && slope <= -0.65,
        format!("errors within a/(1-a) * 0.25 for a = 2^-m, m = 1..6; log-error slope {slope:.4}"),
    )
}

fn banach_rate() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    let grid2 = GridPartition::uniform(2, 0.0, 1.0, 3).unwrap();
    let seed2 = field(|x: &[f64]| (3.0 * x[0]).sin() * (2.0 * x[1]).cos() + x[0] * x[1]);
    for (label, grid, seed, m) in [("1D", unit_grid(), square(), 128), ("2D", grid2, seed2, 32)] {
        let r = construct_alpha_fractal(
            &seed,
            &grid,
            &ScalingFunction::constant(0.5).unwrap(),
            &BaseFunction::Corner,
            &opts(m).with_tol(1e-10),
        )
        .unwrap();
        let rate = r.diagnostics.fitted_rate().unwrap();
        ok &= (rate - 0.5).abs() <= 0.05 && r.diagnostics.iterations <= 40;
        details.push(format!(
            "{label}: ratio {rate:.4}, {} iterations",
            r.diagnostics.iterations
        ));
    }
    check(
        ok,
        format!("gamma = 0.5, tol 1e-10; {}", details.join("; ")),
    )
}

fn operator_identities() -> Outcome {
    let grid = GridPartition::from_knots(vec![vec![0.0, 0.3, 1.0], vec![-1.0, 0.0, 1.0]]).unwrap();
    let samples = random_fields(2, 4, 8);
    let mut id_err: f64 = 0.0;
    let mut zero_err: f64 = 0.0;
    for f in &samples {
        let r = apply_fractal_operator(
            &Identity,
            &ScalingFunction::constant(0.7).unwrap(),
            &grid,
            f,
            &opts(16).with_tol(1e-12),
        )
        .unwrap();
        let fs = SampledFunction::from_field(r.function.lattice().clone(), f.as_ref()).unwrap();
        id_err = id_err.max(sup_distance(&r.function, &fs).unwrap());
        let r = apply_fractal_operator(
            &CornerInterpolation,
            &ScalingFunction::constant(0.0).unwrap(),
            &grid,
            f,
            &opts(16),
        )
        .unwrap();
        zero_err = zero_err.max(sup_distance(&r.function, &fs).unwrap());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let fs = random_fields(2, 20, 10);
    let tol = 1e-8;
    let mut lin: f64 = 0.0;
    for pair in fs.chunks(2) {
        let c = rng.gen_range(-2.0..2.0);
        let rep = verify_linearity(
            &CornerInterpolation,
            &ScalingFunction::constant(0.3).unwrap(),
            &grid,
            &pair[0],
            &pair[1],
            c,
            &opts(16).with_tol(tol),
        )
        .map_err(|e| e.to_string())?;
        lin = lin.max(rep.residual);
    }
    check(
        id_err <= 1e-9 && zero_err <= 1e-9 && lin <= 3.0 * tol,
        format!(
            "identity operator {id_err:.2e}, zero scaling {zero_err:.2e}, linearity residual {lin:.2e} over 10 triples"
        ),
    )
}

fn operator_bounds() -> Outcome {
    let grid =
        GridPartition::from_knots(vec![vec![0.0, 0.4, 1.0], vec![0.0, 0.5, 0.8, 1.0]]).unwrap();
    let fs = random_fields(2, 100, 11);
    let pairs: Vec<(SharedField, SharedField)> =
        fs.chunks(2).map(|c| (c[0].clone(), c[1].clone())).collect();
    let samples = random_fields(2, 10, 12);
    let report = verify_relative_bounds(
        &CornerInterpolation,
        &ScalingFunction::constant(0.4).unwrap(),
        &grid,
        &samples,
        &pairs,
        &opts(16),
    )
    .map_err(|e| e.to_string())?;
    check(
        report.fractal_lipschitz_estimate <= report.fractal_lipschitz_bound + 1e-6,
        format!(
            "norm and difference bounds hold on {} samples and {} pairs; observed Lipschitz {:.4} <= {:.4}",
            report.relative_bounds.len(),
            report.relative_lipschitz.len(),
            report.fractal_lipschitz_estimate,
            report.fractal_lipschitz_bound
        ),
    )
}

fn inverse_round_trip() -> Outcome {
    let grid = unit_grid();
    let scaling = ScalingFunction::constant(0.2).unwrap();
    let mut seeds = random_fields(1, 4, 13);
    seeds.insert(0, square());
    let mut worst: f64 = 0.0;
    let mut certified = true;
    for f in &seeds {
        let fwd =
            apply_fractal_operator(&CornerInterpolation, &scaling, &grid, f, &opts(64)).unwrap();
        let inv = invert_fractal_operator(&fwd.function, &CornerInterpolation, &scaling, &opts(64))
            .map_err(|e| e.to_string())?;
        certified &= inv.bilipschitz_certified;
        let fs = SampledFunction::from_field(fwd.function.lattice().clone(), f.as_ref()).unwrap();
        worst = worst.max(sup_distance(&inv.seed, &fs).unwrap());
    }
    check(
        worst <= 2e-8 && certified,
        format!("5 seeds, max round-trip error {worst:.2e}, bilipschitz certified"),
    )
}

fn attractor_consistency() -> Outcome {
    let grid = unit_grid();
    let scaling = ScalingFunction::constant(0.4).unwrap();
    let r = construct_alpha_fractal(
        &square(),
        &grid,
        &scaling,
        &BaseFunction::Corner,
        &opts(128),
    )
    .unwrap();
    let mut errors = Vec::new();
    for depth in 1..=10 {
        let pts = sample_attractor(&r.system, depth, Some(&[0.3]), ATTRACTOR_POINT_CAP).unwrap();
        let e = pts
            .iter()
            .map(|p| (p.y - r.function.eval_unchecked(&p.x)).abs())
            .fold(0.0, f64::max);
        errors.push(e);
    }
    let floor = 1e-3;
    let decreasing = errors.windows(2).all(|w| w[1] <= w[0].max(floor));
    let last = *errors.last().unwrap();
    check(
        last <= floor && decreasing && errors[0] > last,
        format!(
            "max |y - f(X)| by depth: {}",
            errors
                .iter()
                .map(|e| format!("{e:.1e}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn performance() -> Outcome {
    let grid = GridPartition::uniform(2, 0.0, 1.0, 3).unwrap();
    let seed = field(|x: &[f64]| (4.0 * x[0]).sin() + x[1] * x[1] - x[0] * x[1]);
    let scaling = ScalingFunction::constant(0.5).unwrap();
    let base = fif_core::make_corner_base(&seed, &grid);
    let system = fif_core::build_alpha_system(&seed, &scaling, &base, &grid).unwrap();
    let started = Instant::now();
    let (_, diag) = solve_fif(&system, &opts(128).with_tol(1e-8)).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let lattice = Lattice::new(grid, 128).unwrap();
    check(
        secs < 5.0,
        format!(
            "{} lattice points, {} iterations in {secs:.2} s on {} threads",
            lattice.len(),
            diag.iterations,
            rayon::current_num_threads()
        ),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(d) => {
            println!("PASS  {id:>2} {name}: {d}");
            true
        }
        Err(d) => {
            println!("FAIL  {id:>2} {name}: {d}");
            false
        }
    }
}

fn main() {
    let started = Instant::now();
    let suite: Vec<(Instance, AlphaFractalResult)> = randomized_suite()
        .into_iter()
        .map(|inst| {
            let r = solve(&inst);
            (inst, r)
        })
        .collect();
    let solve_time = started;

    let results = [
        run(1, "node interpolation", || {
            node_interpolation(&suite, solve_time)
        }),
        run(2, "operator contraction", || contraction(&suite)),
        run(3, "well-defined across shared faces", || {
            well_definedness(&suite)
        }),
        run(4, "closed-form desk check", desk_check),
        run(5, "perturbation bounds", || perturbation_bounds(&suite)),
        run(6, "convergence as the scaling vanishes", scaling_sequence),
        run(7, "geometric iteration rate", banach_rate),
        run(8, "operator identities and linearity", operator_identities),
        run(9, "relative bounds and Lipschitz constant", operator_bounds),
        run(10, "inverse round trip", inverse_round_trip),
        run(11, "attractor consistency", attractor_consistency),
        run(12, "performance", performance),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
