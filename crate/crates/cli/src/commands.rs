//! One function per subcommand. Each builds its inputs, runs the core
//! pipeline, writes validated outputs, and prints a short human summary
//! with the machine-readable JSON last.

use std::fs;
use std::thread;

use carleman_core::{
    assemble_block, assemble_truncated, compute_rk0, condition_estimate, default_step_count,
    diagnostics_report, equivalence_check, integrate_lifted, load_ode_spec, measured_p, norm2,
    p_measure_bound, quadratize, read_matrix_market, sample_stable_cubic, save_ode_spec,
    solution_error, solve_block, trajectory_error, write_error_csv, write_matrix_market,
    write_solution_csv, CarlemanError, CarlemanSolution, CarlemanSystem, ErrorReport,
    PolynomialODE, Result, Trajectory,
};
use serde_json::json;

use crate::outputs::{prepare, write_csv_checked, write_json_checked};
use crate::source::{load_system, require_system, LoadedSystem};
use crate::{
    Command, ConvergeArgs, DiagnoseArgs, EquivalenceArgs, QuadratizeArgs, SimulateArgs,
};

/// Seed for the sampled system `equivalence` falls back to.
const DEFAULT_SAMPLE_SEED: u64 = 0x5eed_0011;

/// Floor on the shared fourth-order grid `converge` picks on its own.
const SWEEP_MIN_STEPS: usize = 2_000;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(args) => simulate(args),
        Command::Diagnose(args) => diagnose(args),
        Command::Converge(args) => converge(args),
        Command::Equivalence(args) => equivalence(args),
        Command::Quadratize(args) => quadratize_cmd(args),
    }
}

/// Output of one lift-and-solve at a fixed level.
struct LevelRun {
    system: CarlemanSystem,
    sol: CarlemanSolution,
    report: ErrorReport,
}

/// Lifts `work` at `level`, solves the block system over `t_final`, and
/// compares against the reference trajectory. `m` and `p` fall back to the
/// step-size heuristic and to `m` respectively.
fn run_level(
    work: &PolynomialODE,
    level: usize,
    t_final: f64,
    m: Option<usize>,
    p: Option<usize>,
    reference: &Trajectory,
) -> Result<LevelRun> {
    let system = assemble_truncated(work, level)?;
    let m = match m {
        Some(v) => v,
        None => default_step_count(work, level, t_final)?,
    };
    let p = p.unwrap_or(m);
    let bes = assemble_block(&system, t_final, m, p)?;
    let sol = solve_block(&bes)?;
    let report = solution_error(&sol, reference)?;
    Ok(LevelRun {
        system,
        sol,
        report,
    })
}

fn announce(loaded: &LoadedSystem) {
    println!(
        "system: {} (n = {}, k = {})",
        loaded.label,
        loaded.ode.n(),
        loaded.ode.k()
    );
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let loaded = require_system(&args.source)?;
    let t_final = args.t_final.unwrap_or(loaded.horizon);
    announce(&loaded);

    let work = if args.quadratized_cl {
        println!("path: quadratized lift");
        quadratize(&loaded.ode)?.ode
    } else {
        println!("path: direct lift");
        loaded.ode.clone()
    };

    let reference = loaded.ode.direct_integrate(t_final, args.reference_steps)?;
    let run = run_level(&work, args.level, t_final, args.m, args.p, &reference)?;
    println!(
        "level N = {}, steps m = {}, padding p = {}, h = {:.6e}",
        args.level, run.sol.m, run.sol.p, run.sol.h
    );

    let rows = run.sol.times.len();
    let width = run.sol.x.first().map_or(0, |s| s.len());
    let mut header = String::from("t");
    for i in 1..=width {
        header.push_str(&format!(",x{i}"));
    }

    let solution_path = prepare(&args.out_dir, "solution.csv")?;
    write_csv_checked(&solution_path, &header, rows, |out| {
        write_solution_csv(&run.sol, out)
    })?;
    let error_path = prepare(&args.out_dir, "error.csv")?;
    write_csv_checked(&error_path, "t,abs_err_l2", rows, |out| {
        write_error_csv(&run.report, out)
    })?;

    if args.export_matrix {
        let matrix_path = prepare(&args.out_dir, "a_n.mtx")?;
        write_matrix_market(&run.system.a, &matrix_path)?;
        let back = read_matrix_market(&matrix_path)?;
        if back.rows() != run.system.a.rows()
            || back.cols() != run.system.a.cols()
            || back.nnz() != run.system.a.nnz()
        {
            return Err(CarlemanError::Parse(format!(
                "{}: exported matrix failed to round-trip",
                matrix_path.display()
            )));
        }
        println!("wrote {}", matrix_path.display());
    }

    let p_measured = measured_p(&run.sol, run.sol.m, run.sol.p)?;
    let n0 = norm2(loaded.ode.x0());
    let nf = norm2(reference.final_state());
    if nf == 0.0 {
        return Err(CarlemanError::InvalidInput(
            "decay ratio undefined for a zero final state".into(),
        ));
    }
    let q = n0 / nf;
    let p_bound = p_measure_bound(run.sol.m, run.sol.p, args.level, q);

    let summary = json!({
        "N": args.level,
        "h": run.sol.h,
        "max_time_error": run.report.max_time_error,
        "eps_normalized": run.report.eps_normalized,
        "p_measured": p_measured,
        "p_bound": p_bound,
    });
    let summary_path = prepare(&args.out_dir, "summary.json")?;
    write_json_checked(
        &summary_path,
        &summary,
        &[
            "N",
            "h",
            "max_time_error",
            "eps_normalized",
            "p_measured",
            "p_bound",
        ],
    )?;

    println!("wrote {}", solution_path.display());
    println!("wrote {}", error_path.display());
    println!("wrote {}", summary_path.display());
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn diagnose(args: DiagnoseArgs) -> Result<()> {
    let loaded = require_system(&args.source)?;
    let t_final = args.t_final.unwrap_or(loaded.horizon);
    let p = args.p.unwrap_or(args.m);
    announce(&loaded);
    println!(
        "level N = {}, horizon T = {t_final}, eps = {}",
        args.level, args.eps
    );

    let cond = if args.cond {
        let system = assemble_truncated(&loaded.ode, args.level)?;
        let bes = assemble_block(&system, t_final, args.m, p)?;
        Some(condition_estimate(&bes.matrix()?)?)
    } else {
        None
    };

    let report = diagnostics_report(
        &loaded.ode,
        args.level,
        t_final,
        args.eps,
        args.m,
        p,
        args.reference_steps,
        cond,
    )?;

    let value = serde_json::to_value(&report)?;
    if let Some(dir) = &args.out_dir {
        let path = prepare(dir, "diagnostics.json")?;
        write_json_checked(
            &path,
            &value,
            &[
                "re_lambda1",
                "q",
                "q_k",
                "s",
                "s_k",
                "n_c",
                "p_measure_bound",
                "complexity_expr",
            ],
        )?;
        println!("wrote {}", path.display());
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn converge(args: ConvergeArgs) -> Result<()> {
    let loaded = require_system(&args.source)?;
    let t_final = args.t_final.unwrap_or(loaded.horizon);
    let (lo, hi) = parse_level_range(&args.n_range)?;
    announce(&loaded);

    let work = if args.quadratized_cl {
        println!("path: quadratized lift");
        quadratize(&loaded.ode)?.ode
    } else {
        println!("path: direct lift");
        loaded.ode.clone()
    };
    let reference = loaded.ode.direct_integrate(t_final, args.reference_steps)?;

    // The sweep tabulates what the truncation level alone costs, so every
    // level is integrated with the same fourth-order scheme as the
    // reference, on one shared grid. The block Euler solver would put its
    // own O(h) term on top, identical across levels, and bury the small
    // truncation gaps at the high end of the sweep; its end-to-end error is
    // what `simulate` reports. The grid is never coarser than the top
    // level's stability heuristic.
    let steps = match args.m {
        Some(v) => v,
        None => default_step_count(&work, hi, t_final)?.max(SWEEP_MIN_STEPS),
    };
    println!("shared grid: {steps} fourth-order steps");

    let levels: Vec<usize> = (lo..=hi).collect();
    let outcomes: Vec<Result<f64>> = thread::scope(|s| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&level| {
                let work = &work;
                let reference = &reference;
                s.spawn(move || {
                    let sys = assemble_truncated(work, level)?;
                    let lifted = integrate_lifted(&sys, t_final, steps)?;
                    let report = trajectory_error(&lifted, reference)?;
                    Ok(report.max_time_error)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut errors = Vec::with_capacity(levels.len());
    for (level, outcome) in levels.iter().zip(outcomes) {
        errors.push((*level, outcome?));
    }
    for (level, err) in &errors {
        println!("N = {level}: max_time_error = {err:.6e}");
    }

    let path = prepare(&args.out_dir, "converge.csv")?;
    write_csv_checked(&path, "N,max_time_error", errors.len(), |out| {
        writeln!(out, "N,max_time_error")?;
        for (level, err) in &errors {
            writeln!(out, "{level},{err:.16e}")?;
        }
        Ok(())
    })?;
    println!("wrote {}", path.display());

    let decreasing = errors.windows(2).all(|w| w[1].1 < w[0].1);
    match compute_rk0(&loaded.ode).ok() {
        Some(r) if r < 1.0 => {
            println!("rk0 = {r:.6} < 1: truncation error must shrink with N");
            if !decreasing {
                return Err(CarlemanError::Numerical(
                    "max-over-time error failed to decrease across the sweep despite rk0 < 1"
                        .into(),
                ));
            }
        }
        Some(r) => {
            println!("rk0 = {r:.6} >= 1: no decrease guarantee");
            if !decreasing {
                eprintln!("warning: errors are not monotone across the sweep");
            }
        }
        None => {
            if !decreasing {
                eprintln!("warning: errors are not monotone across the sweep");
            }
        }
    }
    Ok(())
}

fn equivalence(args: EquivalenceArgs) -> Result<()> {
    let loaded = load_system(&args.source)?;
    let (ode, horizon, label) = match loaded {
        Some(l) => {
            if args.seed.is_some() {
                return Err(CarlemanError::InvalidInput(
                    "--seed only applies to the built-in sampled system; drop --preset/--ode"
                        .into(),
                ));
            }
            (l.ode, l.horizon, l.label)
        }
        None => {
            let seed = args.seed.unwrap_or(DEFAULT_SAMPLE_SEED);
            (
                sample_stable_cubic(seed),
                1.0,
                format!("sampled cubic (seed {seed:#x})"),
            )
        }
    };
    let t_final = args.t_final.unwrap_or(horizon);
    if args.m == 0 {
        return Err(CarlemanError::InvalidInput(
            "step count must be positive".into(),
        ));
    }
    let h = t_final / args.m as f64;

    println!("system: {label} (n = {}, k = {})", ode.n(), ode.k());
    let report = equivalence_check(&ode, args.level, t_final, h)?;

    let value = serde_json::to_value(&report)?;
    if let Some(dir) = &args.out_dir {
        let path = prepare(dir, "equivalence.json")?;
        write_json_checked(
            &path,
            &value,
            &[
                "level",
                "direct_level",
                "steps",
                "step_size",
                "horizon",
                "max_discrepancy",
            ],
        )?;
        println!("wrote {}", path.display());
    }
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn quadratize_cmd(args: QuadratizeArgs) -> Result<()> {
    let loaded = require_system(&args.source)?;
    announce(&loaded);
    let quad = quadratize(&loaded.ode)?;
    println!(
        "stacked dimension n_q = {}, segments = {}",
        quad.n_q(),
        quad.segments()
    );
    println!(
        "stacked coefficients: F0 nnz = {}, F1 nnz = {}, F2 nnz = {}",
        quad.ode.f(0).nnz(),
        quad.ode.f(1).nnz(),
        quad.ode.f(2).nnz()
    );
    if let Some(path) = &args.out {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        save_ode_spec(&quad.ode, path)?;
        let back = load_ode_spec(path)?;
        if back.n() != quad.ode.n() || back.k() != 2 {
            return Err(CarlemanError::Parse(format!(
                "{}: saved system failed to round-trip",
                path.display()
            )));
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn parse_level_range(text: &str) -> Result<(usize, usize)> {
    let bad = || {
        CarlemanError::InvalidInput(format!(
            "level range must look like lo:hi with 1 <= lo <= hi, got {text:?}"
        ))
    };
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo < 1 || hi < lo {
        return Err(bad());
    }
    Ok((lo, hi))
}
