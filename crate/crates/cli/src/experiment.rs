//! Approximation and completion experiments with CSV convergence logs.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use fixrank::kernels::{rank_p_approximation, truncated_svd, Mat};
use fixrank::newton::{gradient_warm_start, newton_run_observed, IterationRecord, Status};
use fixrank::random::Sampler;
use fixrank::{
    ApproximationObjective, Balanced, CompletionObjective, EuclideanOracle, FactorPoint, Geometry, GeometryKind,
    Observation, Stiefel,
};
use rand::seq::index;

use crate::config::{ExperimentConfig, Objective, Start};
use crate::matrix_market::{self, MmData};
use crate::CliError;

pub const CSV_COLUMNS: &str = "iter,f,grad_norm,step_norm,krylov_iters,newton_residual,time_ms";

/// A run's header lines (without the leading `# `) and its Newton records.
#[derive(Clone, Debug)]
pub struct ConvergenceLog {
    pub header: Vec<String>,
    pub rows: Vec<IterationRecord>,
}

impl ConvergenceLog {
    pub fn row(r: &IterationRecord) -> String {
        format!(
            "{},{:e},{:e},{:e},{},{:e},{:.3}",
            r.index,
            r.f_value,
            r.riemannian_grad_norm,
            r.step_norm,
            r.krylov_iterations,
            r.residual_of_newton_eq,
            r.wall_time * 1e3
        )
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for h in &self.header {
            let _ = writeln!(s, "# {h}");
        }
        let _ = writeln!(s, "{CSV_COLUMNS}");
        for r in &self.rows {
            let _ = writeln!(s, "{}", Self::row(r));
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_csv()).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Outcome of a Newton run, independent of the geometry.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub status: Status,
    pub message: Option<String>,
    pub warmstart: Vec<IterationRecord>,
    pub records: Vec<IterationRecord>,
    /// `M_k·N_kᵀ` for every Newton iterate when requested, else empty.
    pub products: Vec<Mat>,
    pub factors: (Mat, Mat),
}

impl RunSummary {
    pub fn product(&self) -> Mat {
        &self.factors.0 * self.factors.1.transpose()
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.riemannian_grad_norm)
    }
}

fn run_in<G: Geometry>(
    g: G,
    m: &Mat,
    n: &Mat,
    oracle: &dyn EuclideanOracle,
    cfg: &fixrank::NewtonConfig,
    keep_products: bool,
) -> Result<RunSummary, CliError> {
    let (mut start, mut warmstart) = (g.from_factors(m, n)?, Vec::new());
    let mut cfg = cfg.clone();
    if cfg.warmstart_steps > 0 {
        // Gradient descent in the balanced metric is insensitive to how the
        // scale is split between the factors; the Euclidean metric of the
        // Stiefel geometry is not, and stalls far from the basin of Newton.
        let from = Balanced.from_factors(m, n)?;
        let (warm, recs) = gradient_warm_start(Balanced, &from, oracle, cfg.warmstart_steps, &cfg.armijo)?;
        start = g.from_factors(warm.m(), warm.n())?;
        warmstart = recs;
        cfg.warmstart_steps = 0;
    }
    let mut products = Vec::new();
    let res = newton_run_observed(g, &start, oracle, &cfg, |_, pt| {
        if keep_products {
            products.push(pt.product());
        }
    })?;
    Ok(RunSummary {
        status: res.status,
        message: res.message,
        warmstart,
        records: res.records,
        products,
        factors: (res.point.m().clone(), res.point.n().clone()),
    })
}

/// Runs Newton's method in the chosen geometry from the factors `(m, n)`,
/// after any warm-start steps, which are taken in the balanced geometry.
pub fn run_newton(
    kind: GeometryKind,
    m: &Mat,
    n: &Mat,
    oracle: &dyn EuclideanOracle,
    cfg: &fixrank::NewtonConfig,
    keep_products: bool,
) -> Result<RunSummary, CliError> {
    match kind {
        GeometryKind::Balanced => run_in(Balanced, m, n, oracle, cfg, keep_products),
        GeometryKind::Stiefel => run_in(Stiefel, m, n, oracle, cfg, keep_products),
    }
}

fn header(command: &str, cfg: &ExperimentConfig, summary: &RunSummary) -> Vec<String> {
    let mut h = vec![
        format!("fixrank {}", env!("CARGO_PKG_VERSION")),
        format!("command = {command}"),
    ];
    h.extend(cfg.echo().lines().map(str::to_string));
    if let (Some(first), Some(last)) = (summary.warmstart.first(), summary.warmstart.last()) {
        h.push(format!(
            "warmstart_steps_taken = {} (f {:e} -> {:e}, grad_norm {:e} -> {:e})",
            summary.warmstart.len() - 1,
            first.f_value,
            last.f_value,
            first.riemannian_grad_norm,
            last.riemannian_grad_norm
        ));
    }
    h.push(format!("status = {}", summary.status));
    if let Some(msg) = &summary.message {
        h.push(format!("message = {msg}"));
    }
    h
}

/// `(U√Σ, V√Σ)` of the rank-`p` truncated SVD of `a`.
pub fn balanced_svd_factors(a: &Mat, p: usize) -> Result<(Mat, Mat), CliError> {
    let (u, s, v) = truncated_svd(a, p)?;
    let m = Mat::from_fn(u.nrows(), p, |r, c| u[(r, c)] * s[c].sqrt());
    let n = Mat::from_fn(v.nrows(), p, |r, c| v[(r, c)] * s[c].sqrt());
    Ok((m, n))
}

/// Adds Gaussian noise of Frobenius norm `eps·‖X‖` to `x`.
pub fn perturb(s: &mut Sampler, x: &Mat, eps: f64) -> Mat {
    let g = s.gaussian(x.nrows(), x.ncols());
    let scale = eps * x.norm() / g.norm();
    x + g * scale
}

fn synthetic_target(s: &mut Sampler, cfg: &ExperimentConfig) -> Mat {
    let mut a = match cfg.rank {
        Some(r) => s.gaussian(cfg.m, r) * s.gaussian(cfg.n, r).transpose(),
        None => s.gaussian(cfg.m, cfg.n),
    };
    if cfg.noise > 0.0 {
        a += s.gaussian(cfg.m, cfg.n) * cfg.noise;
    }
    a
}

fn densify(rows: usize, cols: usize, entries: &[Observation]) -> Mat {
    let mut a = Mat::zeros(rows, cols);
    for e in entries {
        a[(e.row, e.col)] = e.value;
    }
    a
}

#[derive(Clone, Debug)]
pub struct ApproxOutcome {
    pub summary: RunSummary,
    pub log: ConvergenceLog,
    /// `‖M_k·N_kᵀ − A_p‖_F` per Newton iterate, `A_p` the truncated SVD.
    pub errors: Vec<f64>,
    pub oracle_distance: f64,
}

impl ApproxOutcome {
    /// `log(e_{k+1}) / log(e_k)` for consecutive errors below 1; values near
    /// 2 indicate quadratic convergence.
    pub fn error_ratios(&self) -> Vec<f64> {
        self.errors
            .windows(2)
            .filter(|w| w[0] > 0.0 && w[0] < 1.0 && w[1] > 0.0)
            .map(|w| w[1].ln() / w[0].ln())
            .collect()
    }

    pub fn report(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "status: {}", self.summary.status)?;
        if let Some(msg) = &self.summary.message {
            writeln!(out, "message: {msg}")?;
        }
        writeln!(out, "newton iterations: {}", self.summary.records.len() - 1)?;
        writeln!(out, "final gradient norm: {:.3e}", self.summary.final_grad_norm())?;
        writeln!(out, "distance to truncated-SVD optimum: {:.3e}", self.oracle_distance)?;
        let ratios: Vec<String> = self.error_ratios().iter().map(|r| format!("{r:.3}")).collect();
        writeln!(out, "log(e_k+1)/log(e_k): [{}]", ratios.join(", "))
    }
}

/// Loads or synthesizes the target and runs Newton on `½‖MNᵀ − A‖²`.
pub fn run_approx(cfg: &ExperimentConfig) -> Result<ApproxOutcome, CliError> {
    let mut cfg = cfg.clone();
    let mut s = Sampler::new(cfg.seed);
    let a = match &cfg.input {
        Some(path) => match matrix_market::read(path)? {
            MmData::Dense(a) => a,
            MmData::Coordinate { rows, cols, entries, .. } => densify(rows, cols, &entries),
        },
        None => synthetic_target(&mut s, &cfg),
    };
    cfg.m = a.nrows();
    cfg.n = a.ncols();
    cfg.validate()?;
    let p = cfg.p;
    let (m0, n0) = match cfg.start {
        Start::Svd => {
            let (m, n) = balanced_svd_factors(&a, p)?;
            (perturb(&mut s, &m, cfg.perturb), perturb(&mut s, &n, cfg.perturb))
        }
        Start::Random => (s.gaussian(cfg.m, p), s.gaussian(cfg.n, p)),
    };
    let best = rank_p_approximation(&a, p)?;
    let oracle = ApproximationObjective::new(a)?;
    let summary = run_newton(cfg.geometry, &m0, &n0, &oracle, &cfg.newton, true)?;
    let errors = summary.products.iter().map(|x| (x - &best).norm()).collect();
    let oracle_distance = (summary.product() - &best).norm();
    let log = ConvergenceLog {
        header: header("approx", &cfg, &summary),
        rows: summary.records.clone(),
    };
    if let Some(path) = &cfg.out {
        log.write(path)?;
    }
    Ok(ApproxOutcome {
        summary,
        log,
        errors,
        oracle_distance,
    })
}

/// Observed entries plus, when known, the full matrix they were drawn from.
#[derive(Clone, Debug)]
pub struct CompletionData {
    pub rows: usize,
    pub cols: usize,
    pub observed: Vec<Observation>,
    pub truth: Option<Mat>,
}

/// Samples `round(ratio·rows·cols)` distinct positions of `truth`, adding
/// Gaussian noise of standard deviation `noise` to the observed values.
pub fn sample_entries(s: &mut Sampler, truth: &Mat, ratio: f64, noise: f64) -> Vec<Observation> {
    let (rows, cols) = truth.shape();
    let total = rows * cols;
    let k = ((ratio * total as f64).round() as usize).clamp(1, total);
    let mut picked = index::sample(s.rng(), total, k).into_vec();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|lin| {
            let (row, col) = (lin % rows, lin / rows);
            let mut value = truth[(row, col)];
            if noise > 0.0 {
                value += noise * s.normal();
            }
            Observation { row, col, value }
        })
        .collect()
}

pub fn completion_data(cfg: &ExperimentConfig, s: &mut Sampler) -> Result<CompletionData, CliError> {
    match (&cfg.input, &cfg.mask) {
        (None, _) => {
            let truth = synthetic_target(s, &ExperimentConfig { noise: 0.0, ..cfg.clone() });
            let observed = sample_entries(s, &truth, cfg.sampling, cfg.noise);
            Ok(CompletionData {
                rows: cfg.m,
                cols: cfg.n,
                observed,
                truth: Some(truth),
            })
        }
        (Some(input), mask) => match (matrix_market::read(input)?, mask) {
            (MmData::Coordinate { rows, cols, entries, .. }, None) => Ok(CompletionData {
                rows,
                cols,
                observed: entries,
                truth: None,
            }),
            (MmData::Coordinate { .. }, Some(_)) => Err(CliError::Usage(
                "a mask applies to a dense (array) input only".into(),
            )),
            (MmData::Dense(truth), Some(mask)) => {
                let (rows, cols) = truth.shape();
                let entries = match matrix_market::read(mask)? {
                    MmData::Coordinate { rows: r, cols: c, entries, .. } if (r, c) == (rows, cols) => entries,
                    MmData::Coordinate { rows: r, cols: c, .. } => {
                        return Err(CliError::Usage(format!(
                            "mask is {r}x{c} but the input matrix is {rows}x{cols}"
                        )))
                    }
                    MmData::Dense(_) => {
                        return Err(CliError::Usage("the mask must be a coordinate file".into()))
                    }
                };
                let observed = entries
                    .into_iter()
                    .map(|e| Observation {
                        value: truth[(e.row, e.col)],
                        ..e
                    })
                    .collect();
                Ok(CompletionData {
                    rows,
                    cols,
                    observed,
                    truth: Some(truth),
                })
            }
            (MmData::Dense(truth), None) => {
                let observed = sample_entries(s, &truth, cfg.sampling, cfg.noise);
                Ok(CompletionData {
                    rows: truth.nrows(),
                    cols: truth.ncols(),
                    observed,
                    truth: Some(truth),
                })
            }
        },
    }
}

#[derive(Clone, Debug)]
pub struct CompletionOutcome {
    pub summary: RunSummary,
    pub log: ConvergenceLog,
    pub observed: usize,
    /// `‖P_Ω(X − A)‖ / ‖P_Ω(A)‖`.
    pub train_residual: f64,
    /// Root mean square error on the unobserved entries, when the full
    /// matrix is known.
    pub heldout_rmse: Option<f64>,
}

impl CompletionOutcome {
    pub fn report(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "status: {}", self.summary.status)?;
        if let Some(msg) = &self.summary.message {
            writeln!(out, "message: {msg}")?;
        }
        writeln!(out, "observed entries: {}", self.observed)?;
        writeln!(out, "warm-start steps: {}", self.summary.warmstart.len().saturating_sub(1))?;
        writeln!(out, "newton iterations: {}", self.summary.records.len() - 1)?;
        writeln!(out, "final gradient norm: {:.3e}", self.summary.final_grad_norm())?;
        writeln!(out, "relative training residual: {:.3e}", self.train_residual)?;
        match self.heldout_rmse {
            Some(r) => writeln!(out, "held-out RMSE: {r:.3e}"),
            None => writeln!(out, "held-out RMSE: n/a (no ground truth)"),
        }
    }
}

/// Loads or synthesizes a sampled matrix, starts from the spectral estimate,
/// and runs the warm start followed by Newton.
pub fn run_completion(cfg: &ExperimentConfig) -> Result<CompletionOutcome, CliError> {
    let mut cfg = cfg.clone();
    cfg.objective = Objective::Completion;
    let mut s = Sampler::new(cfg.seed);
    let data = completion_data(&cfg, &mut s)?;
    cfg.m = data.rows;
    cfg.n = data.cols;
    cfg.validate()?;
    let observed = data.observed.len();
    let objective = CompletionObjective::new(data.rows, data.cols, data.observed)
        .map_err(|e| CliError::Usage(format!("invalid sample: {e}")))?;
    let (m0, n0) = objective.spectral_factors(cfg.p)?;
    let summary = run_newton(cfg.geometry, &m0, &n0, &objective, &cfg.newton, false)?;

    let x = summary.product();
    let (mut num, mut den) = (0.0, 0.0);
    for e in objective.entries() {
        num += (x[(e.row, e.col)] - e.value).powi(2);
        den += e.value * e.value;
    }
    let train_residual = num.sqrt() / den.sqrt().max(f64::MIN_POSITIVE);
    let heldout_rmse = data.truth.as_ref().and_then(|t| {
        let mut mask = vec![false; data.rows * data.cols];
        for e in objective.entries() {
            mask[e.col * data.rows + e.row] = true;
        }
        let (mut sum, mut count) = (0.0, 0usize);
        for j in 0..data.cols {
            for i in 0..data.rows {
                if !mask[j * data.rows + i] {
                    sum += (x[(i, j)] - t[(i, j)]).powi(2);
                    count += 1;
                }
            }
        }
        (count > 0).then(|| (sum / count as f64).sqrt())
    });

    let mut head = header("complete", &cfg, &summary);
    head.push(format!("observed_entries = {observed}"));
    let log = ConvergenceLog {
        header: head,
        rows: summary.records.clone(),
    };
    if let Some(path) = &cfg.out {
        log.write(path)?;
    }
    Ok(CompletionOutcome {
        summary,
        log,
        observed,
        train_residual,
        heldout_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_format() {
        let r = IterationRecord {
            index: 3,
            phase: fixrank::newton::Phase::Newton,
            f_value: 0.5,
            riemannian_grad_norm: 1e-13,
            step_norm: 2.0,
            krylov_iterations: 7,
            residual_of_newton_eq: 1e-3,
            step_length: 1.0,
            wall_time: 0.0125,
        };
        assert_eq!(ConvergenceLog::row(&r), "3,5e-1,1e-13,2e0,7,1e-3,12.500");
    }

    #[test]
    fn sampling_is_exact_and_distinct() {
        let mut s = Sampler::new(3);
        let truth = s.gaussian(10, 8);
        let obs = sample_entries(&mut s, &truth, 0.35, 0.0);
        assert_eq!(obs.len(), 28);
        let mut keys: Vec<_> = obs.iter().map(|e| (e.row, e.col)).collect();
        keys.dedup();
        assert_eq!(keys.len(), 28);
        assert!(obs.iter().all(|e| e.value == truth[(e.row, e.col)]));
    }
}
