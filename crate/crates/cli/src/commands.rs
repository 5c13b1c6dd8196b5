use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use serde_json::json;

use qgraph::config::ProblemConfig;
use qgraph::fem::{assemble, error_norms, fitted_order, solve_direct, EdgeFunction, Mesh, Problem};
use qgraph::graph::{self, MetricGraph};
use qgraph::krylov::{
    bicgstab, cond_estimate, pcg, richardson, CondOptions, KrylovError, SolveReport, StoppingRule,
};
use qgraph::operator::{to_dense, LinearOperator};
use qgraph::partition::partition_by_edges;
use qgraph::precond::{PrecondKind, Preconditioner};
use qgraph::sparse::DenseMatrix;
use qgraph::substructuring::SchurOperator;

use crate::{
    BenchArgs, CondArgs, ConvergenceArgs, Failure, Family, FamilyArgs, GenerateFamily, SolveArgs,
    SolverArgs, SolverKind,
};

/// Largest interface for which `solve --dump` writes the dense S.
const DENSE_DUMP_LIMIT: usize = 1000;
/// Errors below this are rounding noise; no order is fitted to them.
const ROUNDING_FLOOR: f64 = 1e-10;

type CmdResult = Result<(), Failure>;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p)
                .with_context(|| format!("cannot create {}", p.display()))
                .map_err(Failure::usage)?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn io_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::usage(e.into().context("write failed"))
}

fn krylov_failure(e: KrylovError) -> Failure {
    match e {
        KrylovError::InvalidParameter(_) | KrylovError::DimensionMismatch { .. } => {
            Failure::usage(e)
        }
        _ => Failure::numerical(e),
    }
}

pub fn generate(family: &GenerateFamily, out: Option<&Path>) -> CmdResult {
    let g = match *family {
        GenerateFamily::Dgm { level } => Ok(graph::dgm(level)),
        GenerateFamily::Ba { n, m, seed } => graph::barabasi_albert(n, m, seed),
        GenerateFamily::Star { leaves, length } => graph::star(leaves, length),
        GenerateFamily::Path { edges, length } => graph::path(edges, length),
    }
    .map_err(Failure::usage)?;
    let summary = format!("n={} m={}", g.n_vertices(), g.n_edges());
    match out {
        Some(path) => {
            g.write_json(path).map_err(Failure::usage)?;
            println!("{summary}");
        }
        None => {
            let text = serde_json::to_string_pretty(&g.to_json()).map_err(io_failure)?;
            match writeln!(io::stdout().lock(), "{text}") {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => return Err(io_failure(e)),
                _ => {}
            }
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn stopping_rule(args: &SolverArgs) -> Result<StoppingRule, Failure> {
    let tol = args.tol.unwrap_or(StoppingRule::default().tolerance);
    StoppingRule::new(tol, args.maxit).map_err(Failure::usage)
}

fn run_solver(
    args: &SolverArgs,
    op: &SchurOperator,
    prec: &Preconditioner<'_>,
    rule: &StoppingRule,
) -> Result<(Vec<f64>, SolveReport), KrylovError> {
    let g = op.schur_rhs();
    match args.solver {
        SolverKind::Bicgstab => bicgstab(op, prec, &g, rule, None),
        SolverKind::Pcg => pcg(op, prec, &g, rule, None),
        SolverKind::Richardson => richardson(op, prec, &g, args.theta, rule, None),
    }
}

fn write_solution(path: &Path, problem: &Problem, u: &[f64]) -> CmdResult {
    let dofs = qgraph::fem::DofMap::new(&problem.graph, &problem.mesh);
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))
        .map_err(Failure::usage)?;
    w.write_record(["dof", "edge", "vertex", "x", "u"])
        .map_err(io_failure)?;
    for e in 0..problem.graph.n_edges() {
        for (k, d) in dofs.interior_range(e).enumerate() {
            let x = problem.mesh.node(e, k + 1);
            w.write_record([
                d.to_string(),
                e.to_string(),
                String::new(),
                x.to_string(),
                u[d].to_string(),
            ])
            .map_err(io_failure)?;
        }
    }
    for v in 0..problem.graph.n_vertices() {
        let d = dofs.vertex_dof(v);
        w.write_record([
            d.to_string(),
            String::new(),
            v.to_string(),
            String::new(),
            u[d].to_string(),
        ])
        .map_err(io_failure)?;
    }
    w.flush().map_err(io_failure)
}

fn dump_matrix(
    dir: &Path,
    name: &str,
    write: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> CmdResult {
    let path = dir.join(name);
    let mut f = BufWriter::new(
        File::create(&path)
            .with_context(|| format!("cannot create {}", path.display()))
            .map_err(Failure::usage)?,
    );
    write(&mut f).map_err(io_failure)?;
    f.flush().map_err(io_failure)
}

pub fn solve(args: &SolveArgs) -> CmdResult {
    let cfg = ProblemConfig::read(&args.config).map_err(Failure::usage)?;
    let problem = cfg.problem().map_err(Failure::usage)?;
    let exact = cfg.exact().map_err(Failure::usage)?;
    let rule = stopping_rule(&args.solver)?;
    let system = assemble(&problem);
    if let Some(dir) = &args.dump {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))
            .map_err(Failure::usage)?;
        dump_matrix(dir, "A.mtx", |f| system.matrix.write_matrix_market(f))?;
    }

    let mut report = json!({
        "n_vertices": problem.graph.n_vertices(),
        "n_edges": problem.graph.n_edges(),
        "n_dofs": system.dofs.len(),
    });
    let u = if args.direct {
        let u = solve_direct(&system).map_err(Failure::numerical)?;
        report["method"] = json!("direct");
        u
    } else {
        let op = SchurOperator::new(&problem, &partition_by_edges(&problem.graph))
            .map_err(Failure::numerical)?;
        let prec = Preconditioner::setup_with(args.prec, &op, !args.solver.nn_unscaled)
            .map_err(Failure::numerical)?;
        let (u_gamma, solve_report) =
            run_solver(&args.solver, &op, &prec, &rule).map_err(krylov_failure)?;
        if let Some(dir) = &args.dump {
            if op.dim() <= DENSE_DUMP_LIMIT {
                dump_matrix(dir, "S.mtx", |f| to_dense(&op).write_matrix_market(f))?;
                let g: Vec<Vec<f64>> = op.schur_rhs().into_iter().map(|v| vec![v]).collect();
                dump_matrix(dir, "g_gamma.mtx", |f| {
                    DenseMatrix::from_rows(&g).write_matrix_market(f)
                })?;
            } else {
                eprintln!(
                    "interface dimension {} > {DENSE_DUMP_LIMIT}: dense S not written",
                    op.dim()
                );
            }
        }
        report["method"] = json!("schur");
        report["interface_dim"] = json!(op.dim());
        report["prec"] = json!(args.prec.as_str());
        report["nn_scaled"] = json!(!args.solver.nn_unscaled);
        report["solver"] = json!(args.solver.solver.as_str());
        report["setup_seconds"] = json!(prec.setup_seconds());
        report["solve"] = serde_json::to_value(&solve_report).map_err(io_failure)?;
        op.harmonic_extension(&u_gamma, true)
            .map_err(Failure::numerical)?
    };
    report["relative_residual"] = json!(system.relative_residual(&u));
    if let Some(exact) = &exact {
        let err = error_norms(&problem.graph, &problem.mesh, &u, exact);
        report["error"] = serde_json::to_value(err).map_err(io_failure)?;
    }
    if let Some(path) = &args.out {
        write_solution(path, &problem, &u)?;
    }
    let text = serde_json::to_string_pretty(&report).map_err(io_failure)?;
    match &args.report {
        Some(path) => fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(Failure::usage),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn family_graph(args: &FamilyArgs, param: usize) -> Result<MetricGraph, Failure> {
    match args.family {
        Family::Dgm => {
            let level = u32::try_from(param)
                .map_err(|_| Failure::usage(anyhow!("level {param} too large")))?;
            Ok(graph::dgm(level))
        }
        Family::Ba => graph::barabasi_albert(param, args.m, args.seed),
        Family::Star => graph::star(param, 1.0),
        Family::Path => graph::path(param, 1.0),
    }
    .map_err(Failure::usage)
}

fn check_grid(args: &FamilyArgs) -> CmdResult {
    if args.params.is_empty() || args.levels.is_empty() {
        return Err(Failure::usage(anyhow!("empty parameter or level list")));
    }
    Ok(())
}

fn mesh_level(g: &MetricGraph, level: usize) -> Result<Mesh, Failure> {
    let level = u32::try_from(level)
        .map_err(|_| Failure::usage(anyhow!("mesh level {level} too large")))?;
    Mesh::with_level(g, level).map_err(Failure::usage)
}

fn parse_function(name: &str, src: &str) -> Result<EdgeFunction, Failure> {
    EdgeFunction::parse(src)
        .with_context(|| format!("expression for `{name}`"))
        .map_err(Failure::usage)
}

struct BenchRow {
    iters: usize,
    converged: bool,
    seconds: f64,
    matvecs: usize,
}

fn bench_cell(
    args: &BenchArgs,
    op: &SchurOperator,
    kind: PrecondKind,
    rule: &StoppingRule,
) -> BenchRow {
    let prec = match Preconditioner::setup_with(kind, op, !args.solver.nn_unscaled) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{kind}: {e}");
            return BenchRow {
                iters: 0,
                converged: false,
                seconds: 0.0,
                matvecs: 0,
            };
        }
    };
    let report = match run_solver(&args.solver, op, &prec, rule) {
        Ok((_, r)) => r,
        Err(e) => {
            eprintln!("{kind}: {e}");
            e.report().cloned().unwrap_or_default()
        }
    };
    BenchRow {
        iters: report.iterations,
        converged: report.converged,
        seconds: prec.setup_seconds() + report.wall_time,
        matvecs: report.matvecs,
    }
}

pub fn bench(args: &BenchArgs) -> CmdResult {
    check_grid(&args.graphs)?;
    if args.prec.is_empty() {
        return Err(Failure::usage(anyhow!("empty preconditioner list")));
    }
    let c = parse_function("c", &args.c)?;
    let p = parse_function("p", &args.p)?;
    let f = parse_function("f", &args.f)?;
    let rule = stopping_rule(&args.solver)?;

    let mut sink = output(args.out.as_deref())?;
    writeln!(
        sink,
        "# c={},p={},f={},seed={},m={},tol={:e},maxit={}",
        args.c,
        args.p,
        args.f,
        args.graphs.seed,
        args.graphs.m,
        rule.tolerance,
        rule.max_iterations
    )
    .map_err(io_failure)?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "family",
        "param",
        "n_vertices",
        "n_edges",
        "log2_inv_h",
        "prec",
        "solver",
        "iters",
        "converged",
        "seconds",
        "matvecs",
    ])
    .map_err(io_failure)?;

    let mut table = Vec::new();
    for &param in &args.graphs.params {
        let g = family_graph(&args.graphs, param)?;
        for &level in &args.graphs.levels {
            let mesh = mesh_level(&g, level)?;
            let problem = Problem::new(g.clone(), mesh, c.clone(), p.clone(), f.clone())
                .map_err(Failure::usage)?;
            let op = SchurOperator::new(&problem, &partition_by_edges(&problem.graph));
            let mut iters = Vec::new();
            for &kind in &args.prec {
                let row = match &op {
                    Ok(op) => bench_cell(args, op, kind, &rule),
                    Err(e) => {
                        eprintln!(
                            "{}({param}) level {level}: {e}",
                            args.graphs.family.as_str()
                        );
                        BenchRow {
                            iters: 0,
                            converged: false,
                            seconds: 0.0,
                            matvecs: 0,
                        }
                    }
                };
                iters.push(if row.converged {
                    row.iters.to_string()
                } else {
                    format!("{}*", row.iters)
                });
                w.write_record([
                    args.graphs.family.as_str().to_string(),
                    param.to_string(),
                    g.n_vertices().to_string(),
                    g.n_edges().to_string(),
                    level.to_string(),
                    kind.as_str().to_string(),
                    args.solver.solver.as_str().to_string(),
                    row.iters.to_string(),
                    row.converged.to_string(),
                    format!("{:.3}", row.seconds),
                    row.matvecs.to_string(),
                ])
                .map_err(io_failure)?;
            }
            table.push((param, level, iters));
        }
    }
    w.flush().map_err(io_failure)?;

    if args.table {
        let mut text = format!("{:>8} {:>6}", "param", "level");
        for kind in &args.prec {
            text += &format!(" {:>8}", kind.as_str());
        }
        for (param, level, iters) in table {
            text += &format!("\n{param:>8} {level:>6}");
            for it in iters {
                text += &format!(" {it:>8}");
            }
        }
        // keep standard output clean when it carries the CSV
        if args.out.is_some() {
            println!("{text}");
        } else {
            eprintln!("{text}");
        }
    }
    Ok(())
}

fn order_cell(o: Option<f64>) -> String {
    o.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

pub fn convergence(args: &ConvergenceArgs) -> CmdResult {
    let cfg = ProblemConfig::read(&args.config).map_err(Failure::usage)?;
    let exact = cfg
        .exact()
        .map_err(Failure::usage)?
        .ok_or_else(|| Failure::usage(anyhow!("config has no `exact` solution")))?;
    if args.levels.len() < 2 {
        return Err(Failure::usage(anyhow!("need at least two mesh levels")));
    }
    let g = cfg.graph().map_err(Failure::usage)?;
    let mut rows = Vec::new();
    for &level in &args.levels {
        let mesh = mesh_level(&g, level)?;
        let problem = cfg.problem_on(g.clone(), mesh).map_err(Failure::usage)?;
        let system = assemble(&problem);
        let u = solve_direct(&system).map_err(Failure::numerical)?;
        let err = error_norms(&problem.graph, &problem.mesh, &u, &exact);
        rows.push((level, problem.mesh.h_max(), system.dofs.len(), err));
    }
    let fit = |pick: fn(&qgraph::fem::ErrorNorms) -> f64| {
        let errs: Vec<f64> = rows.iter().map(|r| pick(&r.3)).collect();
        if errs.iter().all(|&e| e < ROUNDING_FLOOR) {
            return None;
        }
        let h: Vec<f64> = rows.iter().map(|r| r.1).collect();
        fitted_order(&h, &errs)
    };
    let order_l2 = fit(|e| e.l2);
    let order_h1 = fit(|e| e.h1);

    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record(["log2_inv_h", "h", "n_dofs", "l2", "h1_semi", "h1"])
        .map_err(io_failure)?;
    for (level, h, n, err) in &rows {
        w.write_record([
            level.to_string(),
            format!("{h:e}"),
            n.to_string(),
            format!("{:e}", err.l2),
            format!("{:e}", err.h1_semi),
            format!("{:e}", err.h1),
        ])
        .map_err(io_failure)?;
    }
    w.flush().map_err(io_failure)?;
    let summary = format!(
        "fitted order: l2={}, h1={}",
        order_cell(order_l2),
        order_cell(order_h1)
    );
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

pub fn cond(args: &CondArgs) -> CmdResult {
    check_grid(&args.graphs)?;
    if args.rel_tol.is_nan() || args.rel_tol <= 0.0 {
        return Err(Failure::usage(anyhow!("--rel-tol must be positive")));
    }
    let opts = CondOptions {
        rel_tol: args.rel_tol,
        ..CondOptions::default()
    };
    let inner = StoppingRule::new(1e-12, 10_000).map_err(Failure::usage)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    w.write_record([
        "family",
        "param",
        "n_vertices",
        "n_edges",
        "log2_inv_h",
        "dim",
        "lambda_min",
        "lambda_max",
        "kappa",
        "power_iterations",
        "inverse_iterations",
    ])
    .map_err(io_failure)?;
    for &param in &args.graphs.params {
        let g = family_graph(&args.graphs, param)?;
        for &level in &args.graphs.levels {
            let mesh = mesh_level(&g, level)?;
            let problem = Problem::unit(g.clone(), mesh).map_err(Failure::usage)?;
            let op = SchurOperator::new(&problem, &partition_by_edges(&problem.graph))
                .map_err(Failure::numerical)?;
            if op.dim() == 0 {
                return Err(Failure::usage(anyhow!("graph has no interface vertices")));
            }
            let nn = Preconditioner::setup(PrecondKind::NeumannNeumann, &op)
                .map_err(Failure::numerical)?;
            let solve = |y: &[f64]| pcg(&op, &nn, y, &inner, None).map(|(x, _)| x);
            let est = cond_estimate(&op, &solve, &opts).map_err(krylov_failure)?;
            w.write_record([
                args.graphs.family.as_str().to_string(),
                param.to_string(),
                g.n_vertices().to_string(),
                g.n_edges().to_string(),
                level.to_string(),
                op.dim().to_string(),
                format!("{:e}", est.lambda_min),
                format!("{:e}", est.lambda_max),
                format!("{:.6}", est.kappa),
                est.power_iterations.to_string(),
                est.inverse_iterations.to_string(),
            ])
            .map_err(io_failure)?;
        }
    }
    w.flush().map_err(io_failure)
}
