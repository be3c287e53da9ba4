//! Riemannian Newton iteration on the quotient: the Hessian operator on the
//! horizontal space, its matrix-free solve, and the outer loop.

mod krylov;

use std::time::Instant;

use log::{debug, info};

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::objectives::EuclideanOracle;
use crate::pair::{FactorPair, FactorPoint, LiftPair};
use crate::balanced::HORIZONTAL_TOL;

pub use krylov::{gmres, KrylovSolution};

/// Smallest relative tolerance handed to the Krylov solver.
pub const KRYLOV_TOL_FLOOR: f64 = 1.0e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepPolicy {
    /// Take the full Newton step.
    FullNewton,
    /// Backtrack along the Newton direction until the Armijo condition holds.
    ArmijoDamped,
}

/// Backtracking line-search parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmijoParams {
    /// First trial step. `None` uses 1 for damped Newton steps and, for
    /// gradient steps, the minimizer of the Euclidean quadratic model along
    /// the induced matrix direction.
    pub initial_step: Option<f64>,
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self {
            initial_step: None,
            shrink: 0.5,
            sufficient_decrease: 1.0e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NewtonConfig {
    pub max_outer: usize,
    /// Stop once the gradient norm, measured in the geometry's metric, falls
    /// below this value.
    pub grad_tol: f64,
    /// Fixed relative Krylov tolerance; `None` uses `min(1e-2, ‖grad‖)`.
    pub krylov_tol: Option<f64>,
    /// Krylov iteration cap; `None` uses the horizontal dimension.
    pub krylov_max: Option<usize>,
    pub warmstart_steps: usize,
    pub step_policy: StepPolicy,
    pub armijo: ArmijoParams,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_outer: 50,
            grad_tol: 1.0e-12,
            krylov_tol: None,
            krylov_max: None,
            warmstart_steps: 0,
            step_policy: StepPolicy::FullNewton,
            armijo: ArmijoParams::default(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Contract(format!("invalid Newton configuration: {msg}")));
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if let Some(t) = self.krylov_tol {
            if !(t > 0.0 && t < 1.0) {
                return bad("krylov_tol must lie in (0, 1)");
            }
        }
        if self.krylov_max == Some(0) {
            return bad("krylov_max must be at least 1");
        }
        let a = &self.armijo;
        if !(a.shrink > 0.0 && a.shrink < 1.0) || !(a.sufficient_decrease > 0.0 && a.sufficient_decrease < 1.0) {
            return bad("Armijo shrink and sufficient-decrease factors must lie in (0, 1)");
        }
        if a.initial_step.is_some_and(|t| !(t > 0.0)) {
            return bad("Armijo initial step must be positive");
        }
        Ok(())
    }

    fn forcing(&self, grad_norm: f64) -> f64 {
        self.krylov_tol
            .unwrap_or_else(|| grad_norm.min(1.0e-2))
            .max(KRYLOV_TOL_FLOOR)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Start,
    Warmstart,
    Newton,
}

/// State after one iteration. Step fields describe the move that produced
/// this iterate and are zero for the starting point.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub index: usize,
    pub phase: Phase,
    pub f_value: f64,
    pub riemannian_grad_norm: f64,
    pub step_norm: f64,
    pub krylov_iterations: usize,
    /// Relative residual of the Newton equation for the step taken.
    pub residual_of_newton_eq: f64,
    /// Step length applied along the Newton direction (1 for full steps).
    pub step_length: f64,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    SolverFailure,
    RankBreakdown,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIter => "max_iter",
            Status::SolverFailure => "solver_failure",
            Status::RankBreakdown => "rank_breakdown",
        }
    }
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct NewtonResult<P> {
    pub point: P,
    /// Warm-start gradient steps, if any, starting with the initial point.
    pub warmstart: Vec<IterationRecord>,
    /// The Newton start (record 0) followed by one record per Newton step.
    pub records: Vec<IterationRecord>,
    pub status: Status,
    /// Description of the error that stopped the run, if any.
    pub message: Option<String>,
}

impl<P> NewtonResult<P> {
    pub fn outer_iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.riemannian_grad_norm)
    }
}

/// The map `ξ ↦ Pʰ(∇̄_ξ grad f̄)` on the horizontal space at a point.
pub struct NewtonOperator<'a, G: Geometry> {
    geometry: G,
    point: &'a G::Point,
    oracle: &'a dyn EuclideanOracle,
    gradient: LiftPair,
}

impl<'a, G: Geometry> NewtonOperator<'a, G> {
    pub fn new(geometry: G, point: &'a G::Point, oracle: &'a dyn EuclideanOracle) -> Result<Self> {
        let gradient = geometry.lifted_gradient(point, oracle)?;
        Ok(Self {
            geometry,
            point,
            oracle,
            gradient,
        })
    }

    pub fn gradient(&self) -> &LiftPair {
        &self.gradient
    }

    pub fn point(&self) -> &G::Point {
        self.point
    }

    /// `ḡ(a, b)` at the operator's point.
    pub fn inner(&self, a: &LiftPair, b: &LiftPair) -> f64 {
        self.geometry.metric(self.point, a.pair(), b.pair())
    }

    pub fn apply(&self, xi: &LiftPair) -> Result<LiftPair> {
        let out = self
            .geometry
            .hessian_with(self.point, self.oracle, self.gradient.pair(), xi)?;
        let res = self.geometry.relative_horizontality(self.point, out.pair());
        if res > HORIZONTAL_TOL {
            return Err(Error::Contract(format!(
                "Newton operator produced a non-horizontal vector (residual {res:.3e})"
            )));
        }
        Ok(out)
    }

    /// Solves `L ξ = rhs` by GMRES in the metric `ḡ`.
    pub fn solve(&self, rhs: &LiftPair, tol: f64, maxit: usize) -> Result<KrylovSolution> {
        let res = self.geometry.relative_horizontality(self.point, rhs.pair());
        if res > HORIZONTAL_TOL {
            return Err(Error::Contract(format!(
                "Krylov right-hand side is not horizontal (residual {res:.3e})"
            )));
        }
        gmres(|v| self.apply(v), |a, b| self.inner(a, b), rhs, tol, maxit)
    }
}

/// Builds the Newton operator at `pt`.
pub fn newton_operator<'a, G: Geometry>(
    geometry: G,
    pt: &'a G::Point,
    oracle: &'a dyn EuclideanOracle,
) -> Result<NewtonOperator<'a, G>> {
    NewtonOperator::new(geometry, pt, oracle)
}

/// Solves the Newton equation `L ξ = −grad` at `pt`.
pub fn newton_direction<G: Geometry>(
    geometry: G,
    pt: &G::Point,
    oracle: &dyn EuclideanOracle,
    config: &NewtonConfig,
) -> Result<(LiftPair, KrylovSolution)> {
    let op = NewtonOperator::new(geometry, pt, oracle)?;
    let gnorm = geometry.norm(pt, op.gradient().pair());
    let tol = config.forcing(gnorm);
    let maxit = config.krylov_max.unwrap_or_else(|| pt.horizontal_dim());
    let sol = op.solve(&op.gradient().scale(-1.0), tol, maxit)?;
    Ok((sol.solution.clone(), sol))
}

fn evaluate<G: Geometry>(geometry: G, pt: &G::Point, oracle: &dyn EuclideanOracle) -> Result<(f64, f64)> {
    let f = oracle.value(pt.m(), pt.n())?;
    let grad = geometry.lifted_gradient(pt, oracle)?;
    Ok((f, geometry.norm(pt, grad.pair())))
}

/// One Newton step from `pt`. The record describes the new point; its
/// `index` is 1 and `wall_time` is the duration of the step.
pub fn newton_step<G: Geometry>(
    geometry: G,
    pt: &G::Point,
    oracle: &dyn EuclideanOracle,
    config: &NewtonConfig,
) -> Result<(G::Point, IterationRecord)> {
    let clock = Instant::now();
    let (xi, sol) = newton_direction(geometry, pt, oracle, config)?;
    let (point, t) = match config.step_policy {
        StepPolicy::FullNewton => (geometry.step(pt, &xi, 1.0)?, 1.0),
        StepPolicy::ArmijoDamped => damped_step(geometry, pt, oracle, &xi, &config.armijo)?,
    };
    let (f, gnorm) = evaluate(geometry, &point, oracle)?;
    let record = IterationRecord {
        index: 1,
        phase: Phase::Newton,
        f_value: f,
        riemannian_grad_norm: gnorm,
        step_norm: t * geometry.norm(pt, xi.pair()),
        krylov_iterations: sol.iterations,
        residual_of_newton_eq: sol.relative_residual,
        step_length: t,
        wall_time: clock.elapsed().as_secs_f64(),
    };
    Ok((point, record))
}

/// Backtracking along the Newton direction when it is a descent direction,
/// otherwise along the negative gradient.
fn damped_step<G: Geometry>(
    geometry: G,
    pt: &G::Point,
    oracle: &dyn EuclideanOracle,
    xi: &LiftPair,
    params: &ArmijoParams,
) -> Result<(G::Point, f64)> {
    let grad = geometry.lifted_gradient(pt, oracle)?;
    let slope = geometry.metric(pt, grad.pair(), xi.pair());
    if slope < 0.0 {
        let t0 = params.initial_step.unwrap_or(1.0).min(1.0);
        if let Some((p, t)) = backtrack(geometry, pt, oracle, xi, slope, t0, params)? {
            return Ok((p, t));
        }
    }
    let dir = grad.scale(-1.0);
    let slope = -geometry.metric(pt, grad.pair(), grad.pair());
    match backtrack(geometry, pt, oracle, &dir, slope, params.initial_step.unwrap_or(1.0), params)? {
        Some((p, t)) => Ok((p, t)),
        None => Ok((pt.clone(), 0.0)),
    }
}

fn backtrack<G: Geometry>(
    geometry: G,
    pt: &G::Point,
    oracle: &dyn EuclideanOracle,
    dir: &LiftPair,
    slope: f64,
    t0: f64,
    params: &ArmijoParams,
) -> Result<Option<(G::Point, f64)>> {
    let f0 = oracle.value(pt.m(), pt.n())?;
    let mut t = t0;
    for _ in 0..=params.max_backtracks {
        match geometry.step(pt, dir, t) {
            Ok(trial) => {
                let f = oracle.value(trial.m(), trial.n())?;
                if f <= f0 + params.sufficient_decrease * t * slope {
                    return Ok(Some((trial, t)));
                }
            }
            Err(Error::RankDeficient { .. }) | Err(Error::IllConditioned { .. }) => {}
            Err(e) => return Err(e),
        }
        t *= params.shrink;
    }
    Ok(None)
}

/// Result of one gradient-descent step.
#[derive(Clone, Debug)]
pub struct GradientStep<P> {
    pub point: P,
    /// Accepted step length (0 when no move was made).
    pub step: f64,
    pub f_value: f64,
    /// Gradient norm at the starting point.
    pub grad_norm: f64,
}

/// `‖g‖² / ⟨Ẋ, H[Ẋ]⟩` with `Ẋ = dπ(g)`; falls back to 1 when the curvature is
/// not positive.
fn model_step<P: FactorPoint>(pt: &P, oracle: &dyn EuclideanOracle, g: &FactorPair, g2: f64) -> Result<f64> {
    let (m, n) = (pt.m(), pt.n());
    let hn = oracle.hess_right(m, n, g, n)?;
    let htm = oracle.hess_left(m, n, g, m)?;
    let curv = hn.dot(&g.m) + htm.dot(&g.n);
    let t = g2 / curv;
    Ok(if curv > 0.0 && t.is_finite() { t } else { 1.0 })
}

/// One step of Riemannian gradient descent along `−grad f̄` with Armijo
/// backtracking.
pub fn riemannian_gradient_step<G: Geometry>(
    geometry: G,
    pt: &G::Point,
    oracle: &dyn EuclideanOracle,
    params: &ArmijoParams,
) -> Result<GradientStep<G::Point>> {
    let grad = geometry.lifted_gradient(pt, oracle)?;
    let g2 = geometry.metric(pt, grad.pair(), grad.pair());
    let f0 = oracle.value(pt.m(), pt.n())?;
    if g2 <= 0.0 {
        return Ok(GradientStep {
            point: pt.clone(),
            step: 0.0,
            f_value: f0,
            grad_norm: 0.0,
        });
    }
    let dir = grad.scale(-1.0);
    let t0 = match params.initial_step {
        Some(t) => t,
        None => model_step(pt, oracle, grad.pair(), g2)?,
    };
    match backtrack(geometry, pt, oracle, &dir, -g2, t0, params)? {
        Some((point, step)) => {
            let f_value = oracle.value(point.m(), point.n())?;
            Ok(GradientStep {
                point,
                step,
                f_value,
                grad_norm: g2.sqrt(),
            })
        }
        None => Ok(GradientStep {
            point: pt.clone(),
            step: 0.0,
            f_value: f0,
            grad_norm: g2.sqrt(),
        }),
    }
}

fn status_for(err: &Error) -> Option<Status> {
    match err {
        Error::RankDeficient { .. } | Error::IllConditioned { .. } => Some(Status::RankBreakdown),
        Error::SolverFailure { .. } | Error::SylvesterUnsolvable { .. } | Error::NonFinite(_) => {
            Some(Status::SolverFailure)
        }
        _ => None,
    }
}

/// Up to `steps` Riemannian gradient-descent steps with Armijo backtracking.
///
/// Returns the final point and one record per step, preceded by a record for
/// `start`. Stops early when the line search cannot decrease `f`.
pub fn gradient_warm_start<G: Geometry>(
    geometry: G,
    start: &G::Point,
    oracle: &dyn EuclideanOracle,
    steps: usize,
    armijo: &ArmijoParams,
) -> Result<(G::Point, Vec<IterationRecord>)> {
    let clock = Instant::now();
    let mut point = start.clone();
    let (f, g) = evaluate(geometry, &point, oracle)?;
    let mut records = vec![start_record(Phase::Start, f, g)];
    for k in 1..=steps {
        let step = riemannian_gradient_step(geometry, &point, oracle, armijo)?;
        let moved = step.step > 0.0;
        let step_norm = step.step * step.grad_norm;
        point = step.point;
        let (f, g) = evaluate(geometry, &point, oracle)?;
        debug!("warm start {k}: f = {f:.6e}, |grad| = {g:.3e}, t = {:.3e}", step.step);
        records.push(IterationRecord {
            index: k,
            phase: Phase::Warmstart,
            f_value: f,
            riemannian_grad_norm: g,
            step_norm,
            krylov_iterations: 0,
            residual_of_newton_eq: 0.0,
            step_length: step.step,
            wall_time: clock.elapsed().as_secs_f64(),
        });
        if !moved {
            break;
        }
    }
    Ok((point, records))
}

/// Runs the optional warm start and then Newton's method from `start`.
///
/// Numerical breakdowns end the run with the matching status; contract and
/// oracle errors are returned as `Err`.
pub fn newton_run<G: Geometry>(
    geometry: G,
    start: &G::Point,
    oracle: &dyn EuclideanOracle,
    config: &NewtonConfig,
) -> Result<NewtonResult<G::Point>> {
    newton_run_observed(geometry, start, oracle, config, |_, _| {})
}

/// [`newton_run`] with a callback invoked on every Newton iterate (including
/// the start) together with its record.
pub fn newton_run_observed<G, F>(
    geometry: G,
    start: &G::Point,
    oracle: &dyn EuclideanOracle,
    config: &NewtonConfig,
    mut observe: F,
) -> Result<NewtonResult<G::Point>>
where
    G: Geometry,
    F: FnMut(&IterationRecord, &G::Point),
{
    config.validate()?;
    let clock = Instant::now();
    let mut point = start.clone();

    let mut warmstart = Vec::new();
    if config.warmstart_steps > 0 {
        (point, warmstart) = gradient_warm_start(geometry, &point, oracle, config.warmstart_steps, &config.armijo)?;
    }

    let (f, g) = evaluate(geometry, &point, oracle)?;
    let mut first = start_record(if warmstart.is_empty() { Phase::Start } else { Phase::Newton }, f, g);
    first.wall_time = clock.elapsed().as_secs_f64();
    observe(&first, &point);
    let mut records = vec![first];
    let mut status = Status::MaxIter;
    let mut message = None;
    if g <= config.grad_tol {
        status = Status::Converged;
    } else {
        for k in 1..=config.max_outer {
            match newton_step(geometry, &point, oracle, config) {
                Ok((next, mut rec)) => {
                    rec.index = k;
                    rec.wall_time = clock.elapsed().as_secs_f64();
                    debug!(
                        "newton {k}: f = {:.6e}, |grad| = {:.3e}, |step| = {:.3e}, krylov = {}",
                        rec.f_value, rec.riemannian_grad_norm, rec.step_norm, rec.krylov_iterations
                    );
                    let done = rec.riemannian_grad_norm <= config.grad_tol;
                    observe(&rec, &next);
                    point = next;
                    records.push(rec);
                    if done {
                        status = Status::Converged;
                        break;
                    }
                }
                Err(e) => match status_for(&e) {
                    Some(s) => {
                        status = s;
                        message = Some(e.to_string());
                        break;
                    }
                    None => return Err(e),
                },
            }
        }
    }
    info!(
        "{} Newton finished: {} after {} iterations, |grad| = {:.3e}",
        geometry.name(),
        status,
        records.len() - 1,
        records.last().map_or(f64::NAN, |r| r.riemannian_grad_norm)
    );
    Ok(NewtonResult {
        point,
        warmstart,
        records,
        status,
        message,
    })
}

fn start_record(phase: Phase, f: f64, g: f64) -> IterationRecord {
    IterationRecord {
        index: 0,
        phase,
        f_value: f,
        riemannian_grad_norm: g,
        step_norm: 0.0,
        krylov_iterations: 0,
        residual_of_newton_eq: 0.0,
        step_length: 0.0,
        wall_time: 0.0,
    }
}
