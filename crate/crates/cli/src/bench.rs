//! Wall-clock timings of the geometric overhead of one Newton operator
//! application: a horizontal lift, a horizontal projection and the
//! connection algebra, with no objective evaluations.

use std::fmt::Write as _;
use std::hint::black_box;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use fixrank::balanced::{self, BalancedPoint};
use fixrank::random::Sampler;
use fixrank::stiefel::{self, StiefelPoint};
use fixrank::{FactorPair, FrozenField, GeometryKind, LiftPair, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Values of `m + n` for the size sweep (split as evenly as possible).
    pub sizes: Vec<usize>,
    /// Rank for the size sweep.
    pub p: usize,
    /// Ranks for the rank sweep; empty disables it.
    pub p_values: Vec<usize>,
    /// `m + n` for the rank sweep.
    pub p_total: usize,
    pub geometries: Vec<GeometryKind>,
    /// Minimum duration of one timing batch.
    pub min_batch: Duration,
    pub batches: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![500, 1000, 2000, 4000, 8000],
            p: 5,
            p_values: vec![2, 3, 4, 6, 8],
            p_total: 4000,
            geometries: vec![GeometryKind::Balanced, GeometryKind::Stiefel],
            min_batch: Duration::from_millis(30),
            batches: 7,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub sweep: &'static str,
    pub geometry: GeometryKind,
    pub m: usize,
    pub n: usize,
    pub p: usize,
    /// Fastest per-call time over the batches.
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub timings: Vec<Timing>,
    /// Fitted exponent of time against `m + n`, per geometry.
    pub size_exponents: Vec<(GeometryKind, Option<f64>)>,
    /// Fitted exponent of time against `p`, per geometry.
    pub p_exponents: Vec<(GeometryKind, Option<f64>)>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sweep,geometry,m,n,p,seconds_per_call\n");
        for t in &self.timings {
            let _ = writeln!(s, "{},{},{},{},{},{:e}", t.sweep, t.geometry, t.m, t.n, t.p, t.seconds);
        }
        s
    }

    pub fn report(&self, out: &mut dyn Write) -> io::Result<()> {
        for t in &self.timings {
            writeln!(
                out,
                "{:<5} {:<9} m={:<5} n={:<5} p={:<3} {:>10.3} us",
                t.sweep,
                t.geometry.name(),
                t.m,
                t.n,
                t.p,
                t.seconds * 1e6
            )?;
        }
        let fmt = |e: &Option<f64>| e.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"));
        for (g, e) in &self.size_exponents {
            writeln!(out, "{g}: fitted exponent in m+n = {}", fmt(e))?;
        }
        for (g, e) in &self.p_exponents {
            writeln!(out, "{g}: fitted exponent in p = {}", fmt(e))?;
        }
        Ok(())
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn split(total: usize) -> (usize, usize) {
    let m = total.div_ceil(2);
    (m, total - m)
}

fn time_batches<F: FnMut() -> Result<()>>(mut f: F, min_batch: Duration, batches: usize) -> Result<f64> {
    // Calibrate the repetition count so that one batch lasts at least
    // `min_batch`.
    let mut reps = 1usize;
    loop {
        let t = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        if t.elapsed() >= min_batch || reps >= 1 << 24 {
            break;
        }
        reps *= 2;
    }
    let mut best = f64::INFINITY;
    for _ in 0..batches.max(1) {
        let t = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        best = best.min(t.elapsed().as_secs_f64() / reps as f64);
    }
    Ok(best)
}

/// Per-call time of lift + projection + connection at one size.
pub fn time_kernels(
    geometry: GeometryKind,
    m: usize,
    n: usize,
    p: usize,
    seed: u64,
    min_batch: Duration,
    batches: usize,
) -> Result<f64> {
    let mut s = Sampler::new(seed);
    let u = s.gaussian(m, p);
    let v = s.gaussian(n, p);
    let field = FrozenField {
        value: FactorPair::new(s.gaussian(m, p), s.gaussian(n, p)),
        derivative: FactorPair::new(s.gaussian(m, p), s.gaussian(n, p)),
    };
    match geometry {
        GeometryKind::Balanced => {
            let pt = BalancedPoint::new(s.factor(m, p), s.factor(n, p))?;
            let amb = LiftPair::ambient(&pt, s.gaussian(m, p), s.gaussian(n, p))?;
            time_batches(
                || {
                    let lift = balanced::horizontal_lift_factored(&pt, &u, &v)?;
                    let proj = balanced::horizontal_project(&pt, &amb)?;
                    let conn = balanced::connection_from_parts(
                        &pt,
                        lift.lift.pair(),
                        &field.value,
                        &field.derivative,
                    );
                    black_box((lift, proj, conn));
                    Ok(())
                },
                min_batch,
                batches,
            )
        }
        GeometryKind::Stiefel => {
            let pt = StiefelPoint::new(s.orthonormal(m, p), s.factor(n, p))?;
            let amb = stiefel::tangent_project_total(&pt, &FactorPair::new(s.gaussian(m, p), s.gaussian(n, p)))?;
            time_batches(
                || {
                    let lift = stiefel::horizontal_lift_factored(&pt, &u, &v)?;
                    let proj = stiefel::horizontal_project(&pt, &amb)?;
                    let conn = stiefel::connection_from_parts(&pt, &field.derivative);
                    black_box((lift, proj, conn));
                    Ok(())
                },
                min_batch,
                batches,
            )
        }
    }
}

pub fn run(cfg: &BenchConfig) -> Result<BenchReport> {
    let mut timings = Vec::new();
    let mut size_exponents = Vec::new();
    let mut p_exponents = Vec::new();
    for &g in &cfg.geometries {
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for &total in &cfg.sizes {
            let (m, n) = split(total);
            let t = time_kernels(g, m, n, cfg.p, cfg.seed, cfg.min_batch, cfg.batches)?;
            xs.push(total as f64);
            ys.push(t);
            timings.push(Timing {
                sweep: "size",
                geometry: g,
                m,
                n,
                p: cfg.p,
                seconds: t,
            });
        }
        size_exponents.push((g, fit_exponent(&xs, &ys)));

        if !cfg.p_values.is_empty() {
            let (m, n) = split(cfg.p_total);
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for &p in &cfg.p_values {
                let t = time_kernels(g, m, n, p, cfg.seed, cfg.min_batch, cfg.batches)?;
                xs.push(p as f64);
                ys.push(t);
                timings.push(Timing {
                    sweep: "rank",
                    geometry: g,
                    m,
                    n,
                    p,
                    seconds: t,
                });
            }
            p_exponents.push((g, fit_exponent(&xs, &ys)));
        }
    }
    Ok(BenchReport {
        timings,
        size_exponents,
        p_exponents,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_fit_recovers_power_laws() {
        let xs = [1.0, 2.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powi(2)).collect();
        assert!((fit_exponent(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        assert!(fit_exponent(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn single_point_sweep_gives_one_row() {
        let cfg = BenchConfig {
            sizes: vec![40],
            p: 2,
            p_values: vec![],
            geometries: vec![GeometryKind::Balanced],
            min_batch: Duration::from_millis(1),
            batches: 1,
            ..Default::default()
        };
        let report = run(&cfg).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("size,balanced,20,20,2,"));
        assert_eq!(report.size_exponents[0].1, None);
    }
}
