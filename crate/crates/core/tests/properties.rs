//! Randomized invariants of the expression language, the assembled system,
//! the Schur operator, the preconditioners and the solvers.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qgraph::expr::{BinOp, Func};
use qgraph::fem::assemble;
use qgraph::graph::{barabasi_albert, dgm, path, star};
use qgraph::krylov::pcg;
use qgraph::operator::to_dense;
use qgraph::prelude::*;
use qgraph::sparse::{dot, norm2, DenseMatrix};

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-1e3f64..1e3).prop_map(Expr::Num),
        Just(Expr::X),
        Just(Expr::Pi),
    ];
    leaf.prop_recursive(6, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
            (
                prop_oneof![
                    Just(BinOp::Add),
                    Just(BinOp::Sub),
                    Just(BinOp::Mul),
                    Just(BinOp::Div)
                ],
                inner.clone(),
                inner.clone()
            )
                .prop_map(|(op, a, b)| Expr::Binary(op, Box::new(a), Box::new(b))),
            (inner.clone(), -3i32..=3).prop_map(|(e, k)| Expr::Pow(Box::new(e), k)),
            (
                prop_oneof![
                    Just(Func::Sin),
                    Just(Func::Cos),
                    Just(Func::Exp),
                    Just(Func::Sqrt),
                    Just(Func::Abs)
                ],
                inner
            )
                .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn printed_expressions_parse_to_the_same_function(e in expr_tree()) {
        let text = e.to_string();
        let back = Expr::parse(&text).unwrap();
        for k in 0..10 {
            let x = -2.0 + 0.45 * k as f64;
            prop_assert_eq!(e.eval(x).to_bits(), back.eval(x).to_bits(), "{} at x = {}", text, x);
        }
    }
}

fn graphs() -> Vec<MetricGraph> {
    vec![
        path(1, 1.0).unwrap(),
        path(2, 1.0).unwrap(),
        star(3, 1.0).unwrap(),
        dgm(3),
        barabasi_albert(50, 2, 3).unwrap(),
        star(4, 1.0)
            .unwrap()
            .with_lengths(|e| 0.5 + 0.3 * e as f64)
            .unwrap(),
    ]
}

fn problem(g: MetricGraph, level: u32) -> Problem {
    let mesh = Mesh::with_level(&g, level).unwrap();
    Problem::new(
        g,
        mesh,
        EdgeFunction::parse("1 + x^2").unwrap(),
        EdgeFunction::parse("0.5 + exp(-x)").unwrap(),
        EdgeFunction::parse("sin(2*pi*x) + 1").unwrap(),
    )
    .unwrap()
}

fn schur(p: &Problem) -> SchurOperator {
    SchurOperator::new(p, &partition_by_edges(&p.graph)).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b)
}

#[test]
fn assembled_matrix_is_spd() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for g in graphs() {
        let sys = assemble(&problem(g, 3));
        assert!(sys.matrix.is_symmetric());
        for _ in 0..20 {
            let v = random_vec(&mut rng, sys.dofs.len());
            assert!(dot(&v, &sys.matrix.mul_vec(&v)) > 0.0);
        }
    }
}

#[test]
fn schur_operator_is_symmetric_positive_definite() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for g in graphs() {
        let p = problem(g, 4);
        let op = schur(&p);
        if op.dim() == 0 {
            continue;
        }
        for _ in 0..20 {
            let u = random_vec(&mut rng, op.dim());
            let v = random_vec(&mut rng, op.dim());
            let asym = (dot(&u, &op.apply(&v)) - dot(&v, &op.apply(&u))).abs();
            assert!(asym <= 1e-12 * norm2(&u) * norm2(&v));
            assert!(dot(&u, &op.apply(&u)) > 0.0);
        }
    }
}

#[test]
fn matrix_free_and_dense_schur_agree() {
    for g in graphs().into_iter().chain([dgm(4)]) {
        let p = problem(g, 3);
        let op = schur(&p);
        assert!(op.dim() <= 200);
        if op.dim() == 0 {
            continue;
        }
        // dense S by eliminating every non-interface dof of the full matrix
        let a = assemble(&p).matrix.to_dense();
        let gamma: Vec<usize> = op
            .interface()
            .iter()
            .map(|&v| op.dofs().vertex_dof(v))
            .collect();
        let interior: Vec<usize> = (0..a.nrows()).filter(|i| !gamma.contains(i)).collect();
        let sub = |rows: &[usize], cols: &[usize]| {
            DenseMatrix::from_rows(
                &rows
                    .iter()
                    .map(|&i| cols.iter().map(|&j| a[(i, j)]).collect())
                    .collect::<Vec<_>>(),
            )
        };
        let a_ii_inv = sub(&interior, &interior).inverse().unwrap();
        let correction = sub(&gamma, &interior)
            .matmul(&a_ii_inv)
            .matmul(&sub(&interior, &gamma));
        let a_gg = sub(&gamma, &gamma);
        let probed = to_dense(&op);
        for i in 0..op.dim() {
            for j in 0..op.dim() {
                let s = a_gg[(i, j)] - correction[(i, j)];
                assert!((probed[(i, j)] - s).abs() <= 1e-10 * s.abs().max(1.0));
            }
        }
    }
}

#[test]
fn preconditioners_are_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = problem(dgm(3), 4);
    let op = schur(&p);
    for kind in PrecondKind::ALL {
        let m = Preconditioner::setup(kind, &op).unwrap();
        for _ in 0..10 {
            let u = random_vec(&mut rng, op.dim());
            let v = random_vec(&mut rng, op.dim());
            let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let combo: Vec<f64> = u
                .iter()
                .zip(&v)
                .map(|(a, b)| alpha * a + beta * b)
                .collect();
            let lhs = m.apply(&combo);
            let (mu, mv) = (m.apply(&u), m.apply(&v));
            for k in 0..op.dim() {
                let rhs = alpha * mu[k] + beta * mv[k];
                assert!((lhs[k] - rhs).abs() <= 1e-12 * rhs.abs().max(1.0), "{kind}");
            }
        }
    }
}

#[test]
fn preconditioners_are_symmetric_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for g in [dgm(3), barabasi_albert(60, 2, 5).unwrap()] {
        let p = problem(g, 4);
        let op = schur(&p);
        for kind in PrecondKind::ALL {
            for scaled in [true, false] {
                let m = Preconditioner::setup_with(kind, &op, scaled).unwrap();
                for _ in 0..10 {
                    let u = random_vec(&mut rng, op.dim());
                    let v = random_vec(&mut rng, op.dim());
                    let asym = (dot(&u, &m.apply(&v)) - dot(&v, &m.apply(&u))).abs();
                    assert!(asym <= 1e-12 * norm2(&u) * norm2(&v), "{kind}");
                    assert!(dot(&u, &m.apply(&u)) > 0.0, "{kind}");
                }
            }
        }
    }
}

#[test]
fn scaling_entries_are_inverse_multiplicities() {
    let p = problem(barabasi_albert(40, 2, 9).unwrap(), 2);
    let op = schur(&p);
    let nn = Preconditioner::setup(PrecondKind::NeumannNeumann, &op).unwrap();
    for (k, &v) in op.interface().iter().enumerate() {
        let d = nn.scaling().unwrap()[k];
        assert!(d > 0.0 && d <= 1.0);
        assert_eq!(d, 1.0 / p.graph.degree(v) as f64);
    }
    let diag = Preconditioner::setup(PrecondKind::Diagonal, &op).unwrap();
    assert!(diag.diagonal().unwrap().iter().all(|&d| d > 0.0));
}

#[test]
fn polynomial_preconditioner_is_two_term_neumann_series() {
    let p = problem(dgm(3), 3);
    let op = schur(&p);
    assert!(op.dim() <= 50);
    let s = to_dense(&op);
    let d = s.diagonal();
    let n = op.dim();
    let d_inv = DenseMatrix::from_rows(
        &(0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 1.0 / d[i] } else { 0.0 })
                    .collect()
            })
            .collect::<Vec<_>>(),
    );
    // Σ_{k≤1} (D⁻¹(D − S))^k D⁻¹
    let mut d_minus_s = s.clone();
    for i in 0..n {
        for j in 0..n {
            d_minus_s[(i, j)] = if i == j { d[i] } else { 0.0 } - s[(i, j)];
        }
    }
    let second = d_inv.matmul(&d_minus_s).matmul(&d_inv);
    let poly = to_dense(&Preconditioner::setup(PrecondKind::Polynomial, &op).unwrap());
    for i in 0..n {
        for j in 0..n {
            let want = d_inv[(i, j)] + second[(i, j)];
            assert!((poly[(i, j)] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn solvers_agree_with_direct_solve() {
    let rule = StoppingRule::new(1e-12, 10_000).unwrap();
    for g in graphs().into_iter().chain([dgm(4)]) {
        let p = problem(g, 4);
        let direct = solve_direct(&assemble(&p)).unwrap();
        let op = schur(&p);
        assert!(op.dim() <= 500);
        let nn = Preconditioner::setup(PrecondKind::NeumannNeumann, &op).unwrap();
        let g_rhs = op.schur_rhs();
        let (x_b, _) = bicgstab(&op, &nn, &g_rhs, &rule, None).unwrap();
        let (x_c, _) = pcg(&op, &nn, &g_rhs, &rule, None).unwrap();
        let u_b = op.harmonic_extension(&x_b, true).unwrap();
        let u_c = op.harmonic_extension(&x_c, true).unwrap();
        assert!(rel_diff(&u_b, &direct) < 1e-9);
        assert!(rel_diff(&u_c, &direct) < 1e-9);
    }
}

#[test]
fn reported_residual_matches_true_residual() {
    for g in graphs() {
        let p = problem(g, 5);
        let op = schur(&p);
        if op.dim() == 0 {
            continue;
        }
        let b = op.schur_rhs();
        for kind in PrecondKind::ALL {
            let m = Preconditioner::setup(kind, &op).unwrap();
            for result in [
                bicgstab(&op, &m, &b, &StoppingRule::default(), None),
                pcg(&op, &m, &b, &StoppingRule::default(), None),
            ] {
                let (x, report) = result.unwrap();
                assert!(report.converged);
                assert_eq!(report.residuals.len(), report.iterations + 1);
                let r: Vec<f64> = b.iter().zip(op.apply(&x)).map(|(bi, ax)| bi - ax).collect();
                let truth = norm2(&r) / norm2(&b);
                let reported = report.final_residual();
                assert!(reported <= StoppingRule::default().tolerance);
                assert!(truth <= 10.0 * reported && reported <= 10.0 * truth.max(1e-300) + 1e-15);
            }
        }
    }
}

#[test]
fn zero_rhs_costs_nothing() {
    let p = problem(dgm(2), 3);
    let op = schur(&p);
    let zero = vec![0.0; op.dim()];
    let m = Preconditioner::setup(PrecondKind::NeumannNeumann, &op).unwrap();
    let rule = StoppingRule::default();
    for (x, r) in [
        bicgstab(&op, &m, &zero, &rule, None).unwrap(),
        pcg(&op, &m, &zero, &rule, None).unwrap(),
        richardson(&op, &m, &zero, 0.5, &rule, None).unwrap(),
    ] {
        assert_eq!(r.iterations, 0);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn harmonic_extension_minimizes_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for g in [dgm(3), barabasi_albert(50, 2, 3).unwrap()] {
        let p = problem(g, 3);
        let sys = assemble(&p);
        let op = schur(&p);
        let gamma: Vec<usize> = op
            .interface()
            .iter()
            .map(|&v| op.dofs().vertex_dof(v))
            .collect();
        for _ in 0..20 {
            let u = random_vec(&mut rng, op.dim());
            let h = op.harmonic_extension(&u, false).unwrap();
            let e0 = dot(&h, &sys.matrix.mul_vec(&h));
            let mut w = h.clone();
            for (i, wi) in w.iter_mut().enumerate() {
                if !gamma.contains(&i) {
                    *wi += rng.gen_range(-1e-3..1e-3);
                }
            }
            assert!(dot(&w, &sys.matrix.mul_vec(&w)) >= e0 - 1e-12);
        }
    }
}

#[test]
fn nn_richardson_rate_is_mesh_independent() {
    let mut rates = Vec::new();
    for level in [3, 5, 7] {
        let mesh = Mesh::with_level(&dgm(3), level).unwrap();
        let p = Problem::new(
            dgm(3),
            mesh,
            EdgeFunction::constant(1.0),
            EdgeFunction::constant(1.0),
            EdgeFunction::parse("x").unwrap(),
        )
        .unwrap();
        let op = schur(&p);
        let nn = Preconditioner::setup(PrecondKind::NeumannNeumann, &op).unwrap();
        let rule = StoppingRule::new(1e-10, 1000).unwrap();
        let (_, r) = richardson(&op, &nn, &op.schur_rhs(), 0.5, &rule, None).unwrap();
        // asymptotic contraction factor from the tail of the history
        let h = &r.residuals;
        let k = h.len() - 1;
        let j = k / 2;
        rates.push((h[k] / h[j]).powf(1.0 / (k - j) as f64));
    }
    let spread = rates.iter().cloned().fold(f64::MIN, f64::max)
        - rates.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread <= 0.05, "rates {rates:?}");
    assert!(rates.iter().all(|&r| r < 1.0));
}
