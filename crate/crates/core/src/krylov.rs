//! Matrix-free iterative solvers and extreme-eigenvalue estimation.
//!
//! All solvers measure convergence on the unpreconditioned relative
//! residual `‖b − A x‖ / ‖b‖`. BiCGSTAB is right-preconditioned so its
//! recurrence residual is that quantity; when the recurrence claims
//! convergence the true residual is recomputed, and if it disagrees the
//! iteration continues from the true residual.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::operator::LinearOperator;
use crate::sparse::{axpy, dot, norm2};

/// Stop when the relative residual drops to `tolerance`, or give up after
/// `max_iterations`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for StoppingRule {
    /// Square root of machine epsilon, 10000 iterations.
    fn default() -> Self {
        Self {
            tolerance: f64::EPSILON.sqrt(),
            max_iterations: 10_000,
        }
    }
}

impl StoppingRule {
    pub fn new(tolerance: f64, max_iterations: usize) -> Result<Self, KrylovError> {
        if !(tolerance > 0.0 && tolerance.is_finite()) {
            return Err(KrylovError::InvalidParameter(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        Ok(Self {
            tolerance,
            max_iterations,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative residual before the first iteration and after each one.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub wall_time: f64,
    pub matvecs: usize,
    pub precond_applies: usize,
    pub restarts: usize,
}

impl SolveReport {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("breakdown after restart ({what}) at iteration {}", report.iterations)]
    Breakdown {
        what: &'static str,
        report: Box<SolveReport>,
    },
    #[error("no convergence within {} iterations (residual {:e})", report.iterations, report.final_residual())]
    MaxIterations { report: Box<SolveReport> },
    #[error("operator is not positive definite (pᵀAp = {curvature:e})")]
    Indefinite {
        curvature: f64,
        report: Box<SolveReport>,
    },
    #[error("iteration diverged (residual {:e})", report.final_residual())]
    Diverged { report: Box<SolveReport> },
    #[error("vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("eigenvalue estimate did not settle within {0} iterations")]
    EigenNotConverged(usize),
}

impl KrylovError {
    /// The partial report of a failed solve, when there is one.
    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            KrylovError::Breakdown { report, .. }
            | KrylovError::MaxIterations { report }
            | KrylovError::Indefinite { report, .. }
            | KrylovError::Diverged { report } => Some(report),
            _ => None,
        }
    }
}

pub type SolveResult = Result<(Vec<f64>, SolveReport), KrylovError>;

struct Counter<'a> {
    op: &'a dyn LinearOperator,
    prec: &'a dyn LinearOperator,
    report: SolveReport,
    start: Instant,
}

impl<'a> Counter<'a> {
    fn new(op: &'a dyn LinearOperator, prec: &'a dyn LinearOperator) -> Self {
        Self {
            op,
            prec,
            report: SolveReport::default(),
            start: Instant::now(),
        }
    }

    fn a(&mut self, x: &[f64], y: &mut [f64]) {
        self.report.matvecs += 1;
        self.op.apply_into(x, y);
    }

    fn m(&mut self, x: &[f64], y: &mut [f64]) {
        self.report.precond_applies += 1;
        self.prec.apply_into(x, y);
    }

    fn residual(&mut self, b: &[f64], x: &[f64], r: &mut [f64]) {
        self.a(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    }

    fn finish(mut self, converged: bool) -> SolveReport {
        self.report.converged = converged;
        self.report.wall_time = self.start.elapsed().as_secs_f64();
        self.report
    }
}

fn check_dims(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    x0: Option<&[f64]>,
) -> Result<(), KrylovError> {
    let n = op.dim();
    for got in [prec.dim(), b.len(), x0.map_or(n, <[f64]>::len)] {
        if got != n {
            return Err(KrylovError::DimensionMismatch { expected: n, got });
        }
    }
    Ok(())
}

/// Zero right-hand side: the solution is zero, no work done.
fn trivial(b: &[f64]) -> Option<(Vec<f64>, SolveReport)> {
    (norm2(b) == 0.0).then(|| {
        (
            vec![0.0; b.len()],
            SolveReport {
                residuals: vec![0.0],
                converged: true,
                ..SolveReport::default()
            },
        )
    })
}

/// Right-preconditioned BiCGSTAB. One iteration is the full two-matvec
/// step; an iteration that converges at its half step still counts as one.
/// On a breakdown (`ρ ≈ 0`, `r̂ᵀv ≈ 0` or `ω ≈ 0`) the method restarts
/// once from the current iterate; a second breakdown is an error.
pub fn bicgstab(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    rule: &StoppingRule,
    x0: Option<&[f64]>,
) -> SolveResult {
    check_dims(op, prec, b, x0)?;
    if let Some(t) = trivial(b) {
        return Ok(t);
    }
    let n = b.len();
    let bnorm = norm2(b);
    let mut c = Counter::new(op, prec);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    if x0.is_some() {
        c.residual(b, &x, &mut r);
    } else {
        r.copy_from_slice(b);
    }
    let res = norm2(&r) / bnorm;
    c.report.residuals.push(res);
    if res <= rule.tolerance {
        return Ok((x, c.finish(true)));
    }

    let mut st = BicgState::new(&r);
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut breakdowns = 0;

    while c.report.iterations < rule.max_iterations {
        let rho = dot(&st.r_hat, &r);
        if rho.abs() <= f64::EPSILON * norm2(&st.r_hat) * norm2(&r) {
            breakdowns += 1;
            if breakdowns > 1 {
                return Err(breakdown("rho", c));
            }
            if restart(&mut c, b, &x, &mut r, &mut st, bnorm, rule) {
                return Ok((x, c.finish(true)));
            }
            continue;
        }
        let beta = (rho / st.rho_prev) * (st.alpha / st.omega);
        for ((pk, rk), vk) in st.p.iter_mut().zip(&r).zip(&st.v) {
            *pk = rk + beta * (*pk - st.omega * vk);
        }
        c.m(&st.p, &mut p_hat);
        c.a(&p_hat, &mut st.v);
        let rv = dot(&st.r_hat, &st.v);
        if !rv.is_finite() || rv.abs() <= f64::EPSILON * norm2(&st.r_hat) * norm2(&st.v) {
            breakdowns += 1;
            if breakdowns > 1 {
                return Err(breakdown("r̂ᵀv", c));
            }
            if restart(&mut c, b, &x, &mut r, &mut st, bnorm, rule) {
                return Ok((x, c.finish(true)));
            }
            continue;
        }
        st.alpha = rho / rv;
        for k in 0..n {
            s[k] = r[k] - st.alpha * st.v[k];
        }
        c.report.iterations += 1;

        if norm2(&s) / bnorm <= rule.tolerance {
            axpy(st.alpha, &p_hat, &mut x);
            if confirm(&mut c, b, &x, &mut r, bnorm, rule) {
                return Ok((x, c.finish(true)));
            }
            c.report.restarts += 1;
            st = BicgState::new(&r);
            continue;
        }

        c.m(&s, &mut s_hat);
        c.a(&s_hat, &mut t);
        let tt = dot(&t, &t);
        st.omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        axpy(st.alpha, &p_hat, &mut x);
        axpy(st.omega, &s_hat, &mut x);
        for k in 0..n {
            r[k] = s[k] - st.omega * t[k];
        }
        let res = norm2(&r) / bnorm;
        if res <= rule.tolerance {
            if confirm(&mut c, b, &x, &mut r, bnorm, rule) {
                return Ok((x, c.finish(true)));
            }
            c.report.restarts += 1;
            st = BicgState::new(&r);
            continue;
        }
        c.report.residuals.push(res);
        if st.omega == 0.0 || !st.omega.is_finite() {
            breakdowns += 1;
            if breakdowns > 1 {
                return Err(breakdown("omega", c));
            }
            if restart(&mut c, b, &x, &mut r, &mut st, bnorm, rule) {
                return Ok((x, c.finish(true)));
            }
            continue;
        }
        st.rho_prev = rho;
    }
    Err(KrylovError::MaxIterations {
        report: Box::new(c.finish(false)),
    })
}

struct BicgState {
    r_hat: Vec<f64>,
    p: Vec<f64>,
    v: Vec<f64>,
    rho_prev: f64,
    alpha: f64,
    omega: f64,
}

impl BicgState {
    fn new(r: &[f64]) -> Self {
        Self {
            r_hat: r.to_vec(),
            p: vec![0.0; r.len()],
            v: vec![0.0; r.len()],
            rho_prev: 1.0,
            alpha: 1.0,
            omega: 1.0,
        }
    }
}

fn breakdown(what: &'static str, c: Counter<'_>) -> KrylovError {
    KrylovError::Breakdown {
        what,
        report: Box::new(c.finish(false)),
    }
}

/// Restarts from the true residual of `x`. Returns `true` if that residual
/// already meets the tolerance, replacing the last history entry with it.
fn restart(
    c: &mut Counter<'_>,
    b: &[f64],
    x: &[f64],
    r: &mut [f64],
    st: &mut BicgState,
    bnorm: f64,
    rule: &StoppingRule,
) -> bool {
    c.report.restarts += 1;
    c.residual(b, x, r);
    let res = norm2(r) / bnorm;
    if res <= rule.tolerance {
        *c.report.residuals.last_mut().unwrap() = res;
        return true;
    }
    *st = BicgState::new(r);
    false
}

/// Recomputes the true residual into `r`, records it, and reports whether
/// it meets the tolerance.
fn confirm(
    c: &mut Counter<'_>,
    b: &[f64],
    x: &[f64],
    r: &mut [f64],
    bnorm: f64,
    rule: &StoppingRule,
) -> bool {
    c.residual(b, x, r);
    let res = norm2(r) / bnorm;
    c.report.residuals.push(res);
    res <= rule.tolerance
}

/// Preconditioned conjugate gradients for SPD operators and preconditioners.
pub fn pcg(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    rule: &StoppingRule,
    x0: Option<&[f64]>,
) -> SolveResult {
    check_dims(op, prec, b, x0)?;
    if let Some(t) = trivial(b) {
        return Ok(t);
    }
    let n = b.len();
    let bnorm = norm2(b);
    let mut c = Counter::new(op, prec);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    if x0.is_some() {
        c.residual(b, &x, &mut r);
    } else {
        r.copy_from_slice(b);
    }
    let mut res = norm2(&r) / bnorm;
    c.report.residuals.push(res);
    if res <= rule.tolerance {
        return Ok((x, c.finish(true)));
    }
    let mut z = vec![0.0; n];
    c.m(&r, &mut z);
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    while c.report.iterations < rule.max_iterations {
        c.a(&p, &mut q);
        let curvature = dot(&p, &q);
        if curvature.is_nan() || curvature <= 0.0 {
            return Err(KrylovError::Indefinite {
                curvature,
                report: Box::new(c.finish(false)),
            });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        c.report.iterations += 1;
        res = norm2(&r) / bnorm;
        if res <= rule.tolerance {
            if confirm(&mut c, b, &x, &mut r, bnorm, rule) {
                return Ok((x, c.finish(true)));
            }
            // recurrence drifted from the true residual: restart from it
            c.report.restarts += 1;
            c.m(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        c.report.residuals.push(res);
        c.m(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(KrylovError::MaxIterations {
        report: Box::new(c.finish(false)),
    })
}

/// Damped preconditioned Richardson iteration `x ← x + θ M⁻¹ (b − A x)`.
/// Fails when the residual grows beyond ten times its initial value.
pub fn richardson(
    op: &dyn LinearOperator,
    prec: &dyn LinearOperator,
    b: &[f64],
    theta: f64,
    rule: &StoppingRule,
    x0: Option<&[f64]>,
) -> SolveResult {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(KrylovError::InvalidParameter(format!(
            "damping θ must be positive, got {theta}"
        )));
    }
    check_dims(op, prec, b, x0)?;
    if let Some(t) = trivial(b) {
        return Ok(t);
    }
    let n = b.len();
    let bnorm = norm2(b);
    let mut c = Counter::new(op, prec);
    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    c.residual(b, &x, &mut r);
    let initial = norm2(&r) / bnorm;
    c.report.residuals.push(initial);
    if initial <= rule.tolerance {
        return Ok((x, c.finish(true)));
    }
    while c.report.iterations < rule.max_iterations {
        c.m(&r, &mut z);
        axpy(theta, &z, &mut x);
        c.report.iterations += 1;
        c.residual(b, &x, &mut r);
        let res = norm2(&r) / bnorm;
        c.report.residuals.push(res);
        if res <= rule.tolerance {
            return Ok((x, c.finish(true)));
        }
        if !res.is_finite() || res > 10.0 * initial {
            return Err(KrylovError::Diverged {
                report: Box::new(c.finish(false)),
            });
        }
    }
    Err(KrylovError::MaxIterations {
        report: Box::new(c.finish(false)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CondEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub kappa: f64,
    pub power_iterations: usize,
    pub inverse_iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct CondOptions {
    /// Stop when successive eigenvalue estimates differ by at most this
    /// relative amount.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for CondOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-2,
            max_iterations: 5000,
            seed: 0,
        }
    }
}

/// `y ↦ A⁻¹ y`, typically an inner Krylov solve.
pub type InverseSolve<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>, KrylovError> + 'a;

/// `λ_max` by power iteration on `op`, `λ_min` by inverse iteration where
/// `solve(y)` returns `op⁻¹ y`. Both use Rayleigh quotients of the iterate.
pub fn cond_estimate(
    op: &dyn LinearOperator,
    solve: &InverseSolve<'_>,
    opts: &CondOptions,
) -> Result<CondEstimate, KrylovError> {
    let n = op.dim();
    if n == 0 {
        return Err(KrylovError::InvalidParameter(
            "condition number of an empty operator".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let start: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();

    let (lambda_max, power_iterations) = rayleigh_iteration(&start, opts, |x| Ok(op.apply(x)))?;
    let (mu, inverse_iterations) = rayleigh_iteration(&start, opts, solve)?;
    let lambda_min = 1.0 / mu;
    Ok(CondEstimate {
        lambda_max,
        lambda_min,
        kappa: lambda_max / lambda_min,
        power_iterations,
        inverse_iterations,
    })
}

/// Dominant eigenvalue of a symmetric positive map by power iteration.
fn rayleigh_iteration(
    start: &[f64],
    opts: &CondOptions,
    map: impl Fn(&[f64]) -> Result<Vec<f64>, KrylovError>,
) -> Result<(f64, usize), KrylovError> {
    let mut x = start.to_vec();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut prev = f64::NAN;
    for k in 1..=opts.max_iterations {
        let y = map(&x)?;
        let lambda = dot(&x, &y);
        let ny = norm2(&y);
        if ny == 0.0 {
            return Ok((0.0, k));
        }
        x = y.into_iter().map(|v| v / ny).collect();
        if (lambda - prev).abs() <= opts.rel_tol * lambda.abs() {
            return Ok((lambda, k));
        }
        prev = lambda;
    }
    Err(KrylovError::EigenNotConverged(opts.max_iterations))
}
