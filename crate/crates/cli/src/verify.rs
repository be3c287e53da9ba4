//! Property battery for both quotient geometries: split, lift, Sylvester,
//! invariance, connection and geodesic checks over seeded random instances.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::time::{Duration, Instant};

use fixrank::balanced::{self, FiberDirection, GaugeTransform};
use fixrank::kernels::{relative, Mat};
use fixrank::random::Sampler;
use fixrank::stiefel::{self, GaugeRotation, ProjectedConstantField};
use fixrank::{
    ApproximationObjective, BalancedPoint, ConstantField, FactorPair, FactorPoint, LiftPair, Result,
    StiefelPoint, VectorField,
};

/// Thresholds used by the battery. Keys accepted by [`Tolerances::set`] are
/// the field names.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub split: f64,
    pub roundtrip: f64,
    pub sylvester: f64,
    pub invariance: f64,
    pub rotation_invariance: f64,
    pub euclidean_discrepancy: f64,
    pub connection_fd: f64,
    pub fd_step: f64,
    pub torsion: f64,
    pub covariance: f64,
    pub exp_fixed: f64,
    pub exp_velocity: f64,
    pub exp_orthonormality: f64,
    pub great_circle: f64,
    pub geodesic_second: f64,
    pub geodesic_step: f64,
    pub horizontal_velocity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            split: 1e-10,
            roundtrip: 1e-10,
            sylvester: 1e-10,
            invariance: 1e-10,
            rotation_invariance: 1e-12,
            euclidean_discrepancy: 1e-2,
            connection_fd: 1e-5,
            fd_step: 1e-6,
            torsion: 1e-10,
            covariance: 1e-8,
            exp_fixed: 1e-13,
            exp_velocity: 1e-6,
            exp_orthonormality: 1e-9,
            great_circle: 1e-10,
            geodesic_second: 1e-4,
            geodesic_step: 1e-4,
            horizontal_velocity: 1e-6,
        }
    }
}

impl Tolerances {
    pub const KEYS: [&'static str; 17] = [
        "split",
        "roundtrip",
        "sylvester",
        "invariance",
        "rotation_invariance",
        "euclidean_discrepancy",
        "connection_fd",
        "fd_step",
        "torsion",
        "covariance",
        "exp_fixed",
        "exp_velocity",
        "exp_orthonormality",
        "great_circle",
        "geodesic_second",
        "geodesic_step",
        "horizontal_velocity",
    ];

    fn slot(&mut self, key: &str) -> Option<&mut f64> {
        Some(match key {
            "split" => &mut self.split,
            "roundtrip" => &mut self.roundtrip,
            "sylvester" => &mut self.sylvester,
            "invariance" => &mut self.invariance,
            "rotation_invariance" => &mut self.rotation_invariance,
            "euclidean_discrepancy" => &mut self.euclidean_discrepancy,
            "connection_fd" => &mut self.connection_fd,
            "fd_step" => &mut self.fd_step,
            "torsion" => &mut self.torsion,
            "covariance" => &mut self.covariance,
            "exp_fixed" => &mut self.exp_fixed,
            "exp_velocity" => &mut self.exp_velocity,
            "exp_orthonormality" => &mut self.exp_orthonormality,
            "great_circle" => &mut self.great_circle,
            "geodesic_second" => &mut self.geodesic_second,
            "geodesic_step" => &mut self.geodesic_step,
            "horizontal_velocity" => &mut self.horizontal_velocity,
            _ => return None,
        })
    }

    /// Overrides one tolerance by name.
    pub fn set(&mut self, key: &str, value: f64) -> std::result::Result<(), String> {
        if !(value > 0.0 && value.is_finite()) {
            return Err(format!("tolerance `{key}` must be positive, got {value}"));
        }
        match self.slot(key) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(format!("unknown tolerance `{key}` (known: {})", Self::KEYS.join(", "))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    /// `(m, n, p)` instances.
    pub instances: Vec<(usize, usize, usize)>,
    pub trials: usize,
    pub seed: u64,
    pub tolerances: Tolerances,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let mut instances = Vec::new();
        for &m in &[7, 12] {
            for &n in &[5, 9] {
                for &p in &[1, 2, 3] {
                    instances.push((m, n, p));
                }
            }
        }
        // Boundary ranks p = min(m, n) and the smallest instance.
        instances.extend([(7, 5, 5), (4, 4, 4), (2, 1, 1)]);
        Self {
            instances,
            trials: 25,
            seed: 20_240_601,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    AtMost,
    AtLeast,
}

/// Aggregated outcome of one property over all instances and trials.
#[derive(Clone, Debug)]
pub struct PropertyResult {
    pub name: &'static str,
    /// Largest residual for `AtMost` properties; for `AtLeast` properties the
    /// smallest per-instance maximum.
    pub observed: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub samples: usize,
    pub failures: Vec<String>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && match self.bound {
                Bound::AtMost => self.observed <= self.threshold,
                Bound::AtLeast => self.observed >= self.threshold,
            }
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.bound {
            Bound::AtMost => "<=",
            Bound::AtLeast => ">=",
        };
        write!(
            f,
            "{} {:<42} observed {:.3e} {op} {:.1e} ({} samples)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.observed,
            self.threshold,
            self.samples
        )?;
        for msg in self.failures.iter().take(3) {
            write!(f, "\n     error: {msg}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub results: Vec<PropertyResult>,
    pub elapsed: Duration,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(PropertyResult::passed)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn write_to(&self, out: &mut dyn Write) -> io::Result<()> {
        for r in &self.results {
            writeln!(out, "{r}")?;
        }
        let failed = self.results.iter().filter(|r| !r.passed()).count();
        writeln!(
            out,
            "{} properties, {} failed, {:.2} s",
            self.results.len(),
            failed,
            self.elapsed.as_secs_f64()
        )
    }
}

/// Residuals of one trial, keyed by property name.
#[derive(Default)]
struct Samples {
    values: Vec<(&'static str, f64)>,
    errors: Vec<(&'static str, String)>,
}

impl Samples {
    fn push(&mut self, name: &'static str, value: f64) {
        self.values.push((name, value));
    }

    fn record(&mut self, name: &'static str, r: Result<()>) {
        if let Err(e) = r {
            self.errors.push((name, e.to_string()));
        }
    }
}

/// `(name, bound, threshold)` for every property in the battery.
fn catalog(t: &Tolerances) -> Vec<(&'static str, Bound, f64)> {
    use Bound::*;
    vec![
        ("balanced.split.horizontal", AtMost, t.split),
        ("balanced.split.vertical", AtMost, t.split),
        ("balanced.split.orthogonal", AtMost, t.split),
        ("balanced.lift.roundtrip", AtMost, t.roundtrip),
        ("balanced.lift.horizontal", AtMost, t.roundtrip),
        ("balanced.lift.uniqueness", AtMost, t.roundtrip),
        ("balanced.sylvester.lift", AtMost, t.sylvester),
        ("balanced.sylvester.projection", AtMost, t.sylvester),
        ("balanced.dimension", AtMost, 0.5),
        ("balanced.metric.invariance", AtMost, t.invariance),
        ("balanced.metric.scaling_gauge", AtMost, t.invariance),
        ("balanced.transport", AtMost, t.invariance),
        ("balanced.connection.metric_compatibility", AtMost, t.connection_fd),
        ("balanced.connection.koszul", AtMost, t.connection_fd),
        ("balanced.connection.torsion", AtMost, t.torsion),
        ("balanced.connection.covariance", AtMost, t.covariance),
        ("euclidean.metric.non_invariance", AtLeast, t.euclidean_discrepancy),
        ("stiefel.split.horizontal", AtMost, t.split),
        ("stiefel.split.vertical", AtMost, t.split),
        ("stiefel.split.orthogonal", AtMost, t.split),
        ("stiefel.lift.roundtrip", AtMost, t.roundtrip),
        ("stiefel.lift.horizontal", AtMost, t.roundtrip),
        ("stiefel.lift.uniqueness", AtMost, t.roundtrip),
        ("stiefel.sylvester.lift", AtMost, t.sylvester),
        ("stiefel.sylvester.projection", AtMost, t.sylvester),
        ("stiefel.sylvester.skew", AtMost, t.sylvester),
        ("stiefel.dimension", AtMost, 0.5),
        ("stiefel.metric.invariance", AtMost, t.rotation_invariance),
        ("stiefel.transport", AtMost, t.invariance),
        ("stiefel.connection.metric_compatibility", AtMost, t.connection_fd),
        ("stiefel.connection.koszul", AtMost, t.connection_fd),
        ("stiefel.connection.torsion", AtMost, t.torsion),
        ("stiefel.connection.tangency", AtMost, t.torsion),
        ("stiefel.connection.covariance", AtMost, t.covariance),
        ("stiefel.exp.fixed_point", AtMost, t.exp_fixed),
        ("stiefel.exp.initial_velocity", AtMost, t.exp_velocity),
        ("stiefel.exp.orthonormality", AtMost, t.exp_orthonormality),
        ("stiefel.exp.great_circle", AtMost, t.great_circle),
        ("stiefel.exp.second_difference", AtMost, t.geodesic_second),
        ("stiefel.exp.horizontal_velocity", AtMost, t.horizontal_velocity),
    ]
}

/// Runs the battery; instances are processed on separate threads.
pub fn run(config: &VerifyConfig) -> VerifyReport {
    let clock = Instant::now();
    let tol = &config.tolerances;
    let per_instance: Vec<Samples> = std::thread::scope(|scope| {
        let handles: Vec<_> = config
            .instances
            .iter()
            .enumerate()
            .map(|(idx, &(m, n, p))| {
                let seed = config.seed.wrapping_add(1_000_003 * idx as u64);
                scope.spawn(move || run_instance(seed, m, n, p, config.trials, tol))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("verification thread panicked"))
            .collect()
    });

    let mut results = Vec::new();
    for (name, bound, threshold) in catalog(tol) {
        let mut observed: Option<f64> = None;
        let mut samples = 0;
        let mut failures = Vec::new();
        for (inst, s) in config.instances.iter().zip(&per_instance) {
            let vals: Vec<f64> = s.values.iter().filter(|(k, _)| *k == name).map(|(_, v)| *v).collect();
            samples += vals.len();
            for (_, msg) in s.errors.iter().filter(|(k, _)| *k == name) {
                failures.push(format!("{inst:?}: {msg}"));
            }
            if vals.is_empty() {
                continue;
            }
            let inst_max = vals.iter().copied().fold(f64::NEG_INFINITY, nan_max);
            observed = Some(match (bound, observed) {
                (_, None) => inst_max,
                (Bound::AtMost, Some(o)) => nan_max(o, inst_max),
                (Bound::AtLeast, Some(o)) => o.min(inst_max),
            });
        }
        results.push(PropertyResult {
            name,
            observed: observed.unwrap_or(f64::NAN),
            threshold,
            bound,
            samples,
            failures,
        });
    }
    VerifyReport {
        results,
        elapsed: clock.elapsed(),
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn run_instance(seed: u64, m: usize, n: usize, p: usize, trials: usize, tol: &Tolerances) -> Samples {
    let mut s = Sampler::new(seed);
    let mut out = Samples::default();
    for _ in 0..trials {
        let r = balanced_trial(&mut s, m, n, p, tol, &mut out);
        out.record("balanced.split.horizontal", r);
        let r = euclidean_trial(&mut s, m, n, p, &mut out);
        out.record("euclidean.metric.non_invariance", r);
        let r = stiefel_trial(&mut s, m, n, p, tol, &mut out);
        out.record("stiefel.split.horizontal", r);
        let r = geodesic_trial(&mut s, m, n, p, tol, &mut out);
        out.record("stiefel.exp.fixed_point", r);
    }
    out
}

fn ambient(s: &mut Sampler, m: usize, n: usize, p: usize) -> FactorPair {
    FactorPair::new(s.gaussian(m, p), s.gaussian(n, p))
}

fn unit_ambient(s: &mut Sampler, m: usize, n: usize, p: usize) -> FactorPair {
    let a = ambient(s, m, n, p);
    let nrm = a.norm();
    a.scale(1.0 / nrm)
}

/// Numerical rank of the `dπ` images of `dirs`, flattened into columns.
fn image_rank(images: &[Mat]) -> usize {
    let rows = images[0].len();
    let a = Mat::from_fn(rows, images.len(), |r, c| images[c][r]);
    let sv = a.singular_values();
    let max = sv.max();
    sv.iter().filter(|&&v| v > 1e-10 * max).count()
}

/// Central difference of `f` at 0 with step `h`.
fn central<F: FnMut(f64) -> Result<f64>>(mut f: F, h: f64) -> Result<f64> {
    Ok((f(h)? - f(-h)?) / (2.0 * h))
}

fn sylvester_residual(a: &Mat, b: &Mat, x: &Mat, c: &Mat) -> f64 {
    let res = (a * x + x * b - c).norm();
    relative(res, c.norm() + (a.norm() + b.norm()) * x.norm())
}

fn balanced_trial(s: &mut Sampler, m: usize, n: usize, p: usize, tol: &Tolerances, out: &mut Samples) -> Result<()> {
    let pt = BalancedPoint::new(s.factor(m, p), s.factor(n, p))?;
    let g = |a: &FactorPair, b: &FactorPair| balanced::metric_pair(&pt, a, b);
    let gnorm = |a: &FactorPair| balanced::metric_pair(&pt, a, a).max(0.0).sqrt();
    let gm = pt.gram_m().clone();
    let gn = pt.gram_n().clone();

    // Direct sum.
    let a = ambient(s, m, n, p);
    let proj = balanced::horizontal_project(&pt, &LiftPair::ambient(&pt, a.m.clone(), a.n.clone())?)?;
    let h = proj.lift.pair().clone();
    let v = &a - &h;
    let vert = balanced::vertical_vector(&pt, &FiberDirection(-&proj.rdot))?;
    out.push("balanced.split.horizontal", balanced::relative_horizontality(&pt, &h));
    out.push("balanced.split.vertical", relative((&v - vert.pair()).norm(), a.norm()));
    out.push("balanced.split.orthogonal", relative(g(&h, &v).abs(), gnorm(&h) * gnorm(&v)));
    let c = -(&gn * pt.m().transpose() * &a.m) + a.n.transpose() * pt.n() * &gm;
    let gngm = &gn * &gm;
    out.push(
        "balanced.sylvester.projection",
        sylvester_residual(&gngm, &gngm, &proj.rdot, &c),
    );

    // Lifts.
    let z = s.tangent_at(pt.m(), pt.n());
    let lift = balanced::horizontal_lift(&pt, &z)?;
    let back = balanced::dpi(&pt, &lift.lift)?;
    out.push("balanced.lift.roundtrip", relative((&back - &z).norm(), z.norm()));
    out.push("balanced.lift.horizontal", balanced::relative_horizontality(&pt, lift.lift.pair()));
    let gmgn = &gm * &gn;
    let rhs = pt.m().transpose() * &z * pt.n();
    out.push("balanced.sylvester.lift", sylvester_residual(&gmgn, &gmgn, &lift.k, &rhs));
    let again = balanced::horizontal_lift(&pt, &balanced::dpi(&pt, &proj.lift)?)?;
    out.push(
        "balanced.lift.uniqueness",
        relative((again.lift.pair() - &h).norm(), h.norm()),
    );

    // Dimension of the image of dπ.
    let d = pt.horizontal_dim();
    let mut images = Vec::with_capacity(d + p * p);
    for _ in 0..d + p * p {
        let a = ambient(s, m, n, p);
        images.push(&a.m * pt.n().transpose() + pt.m() * a.n.transpose());
    }
    out.push("balanced.dimension", (image_rank(&images) as f64 - d as f64).abs());

    // Invariance along the fiber.
    let gauge = GaugeTransform::new(s.gauge(p))?;
    let pt2 = balanced::transport_point(&pt, &gauge)?;
    let z2 = s.tangent_at(pt.m(), pt.n());
    let x1 = lift.lift.clone();
    let x2 = balanced::horizontal_lift(&pt, &z2)?.lift;
    let y1 = balanced::horizontal_lift(&pt2, &z)?.lift;
    let y2 = balanced::horizontal_lift(&pt2, &z2)?.lift;
    let before = balanced::metric_total(&pt, &x1, &x2)?;
    let after = balanced::metric_total(&pt2, &y1, &y2)?;
    let scale = gnorm(x1.pair()) * gnorm(x2.pair());
    out.push("balanced.metric.invariance", relative((before - after).abs(), scale));
    let moved = balanced::fiber_transport(&pt, &x1, &gauge, &pt2)?;
    out.push(
        "balanced.transport",
        relative(moved.sub(&y1).euclidean_norm(), y1.euclidean_norm()),
    );

    // The scaling gauge used for the Euclidean counterexample.
    let pt3 = balanced::transport_point(&pt, &GaugeTransform::new(scaling_gauge(p))?)?;
    let w = balanced::horizontal_lift(&pt3, &z)?.lift;
    let n0 = balanced::metric_total(&pt, &x1, &x1)?;
    let n3 = balanced::metric_total(&pt3, &w, &w)?;
    out.push("balanced.metric.scaling_gauge", relative((n0 - n3).abs(), n0));

    // Connection axioms with constant fields, whose brackets vanish.
    let x = unit_ambient(s, m, n, p);
    let y = unit_ambient(s, m, n, p);
    let zf = unit_ambient(s, m, n, p);
    let h_fd = tol.fd_step;
    let metric_at = |t: f64, dir: &FactorPair, a: &FactorPair, b: &FactorPair| -> Result<f64> {
        let q = BalancedPoint::new(pt.m() + &dir.m * t, pt.n() + &dir.n * t)?;
        Ok(balanced::metric_pair(&q, a, b))
    };
    let conn = |dir: &FactorPair, field: &FactorPair| -> Result<FactorPair> {
        let xl = LiftPair::ambient(&pt, dir.m.clone(), dir.n.clone())?;
        Ok(balanced::connection_total(&pt, &xl, &ConstantField(field.clone()))?.into_pair())
    };
    let dxyz = central(|t| metric_at(t, &x, &y, &zf), h_fd)?;
    let nxy = conn(&x, &y)?;
    let nxz = conn(&x, &zf)?;
    out.push(
        "balanced.connection.metric_compatibility",
        (dxyz - g(&nxy, &zf) - g(&y, &nxz)).abs(),
    );
    let dyzx = central(|t| metric_at(t, &y, &zf, &x), h_fd)?;
    let dzxy = central(|t| metric_at(t, &zf, &x, &y), h_fd)?;
    out.push(
        "balanced.connection.koszul",
        (2.0 * g(&nxy, &zf) - (dxyz + dyzx - dzxy)).abs(),
    );
    let nyz = conn(&y, &zf)?;
    let nzy = conn(&zf, &y)?;
    out.push(
        "balanced.connection.torsion",
        relative((&nyz - &nzy).norm(), nyz.norm()),
    );

    // Gauge covariance of the quotient connection on a gradient field.
    let target = s.gaussian(m, n);
    let obj = ApproximationObjective::new(target)?;
    let field = fixrank::objectives::gradient_field_balanced(&obj);
    let c1 = balanced::connection_quotient(&pt, &x1, &field)?;
    let c2 = balanced::connection_quotient(&pt2, &y1, &field)?;
    let expect = c1.pair().right_mul(gauge.matrix(), gauge.inverse_transpose());
    out.push(
        "balanced.connection.covariance",
        relative((c2.pair() - &expect).norm(), expect.norm()),
    );
    Ok(())
}

/// `diag(2, ½, 2, ½, …)`.
pub fn scaling_gauge(p: usize) -> Mat {
    Mat::from_fn(p, p, |i, j| if i != j { 0.0 } else if i % 2 == 0 { 2.0 } else { 0.5 })
}

/// Relative change of the plain Euclidean norm of lifts between `(M, N)` and
/// `(MR, NR⁻ᵀ)` for `R = diag(2, ½, …)`.
pub fn euclidean_discrepancy(s: &mut Sampler, m: usize, n: usize, p: usize) -> Result<(f64, f64)> {
    let pt = BalancedPoint::new(s.factor(m, p), s.factor(n, p))?;
    let gauge = GaugeTransform::new(scaling_gauge(p))?;
    let pt2 = balanced::transport_point(&pt, &gauge)?;
    let z = s.tangent_at(pt.m(), pt.n());
    let e1 = balanced::euclidean_horizontal_lift(&pt, &z)?;
    let e2 = balanced::euclidean_horizontal_lift(&pt2, &z)?;
    let n1 = balanced::euclidean_metric(&e1, &e1);
    let n2 = balanced::euclidean_metric(&e2, &e2);
    let b1 = balanced::horizontal_lift(&pt, &z)?.lift;
    let b2 = balanced::horizontal_lift(&pt2, &z)?.lift;
    let g1 = balanced::metric_total(&pt, &b1, &b1)?;
    let g2 = balanced::metric_total(&pt2, &b2, &b2)?;
    Ok((relative((n1 - n2).abs(), n1), relative((g1 - g2).abs(), g1)))
}

fn euclidean_trial(s: &mut Sampler, m: usize, n: usize, p: usize, out: &mut Samples) -> Result<()> {
    let (euc, _) = euclidean_discrepancy(s, m, n, p)?;
    out.push("euclidean.metric.non_invariance", euc);
    Ok(())
}

fn stiefel_trial(s: &mut Sampler, m: usize, n: usize, p: usize, tol: &Tolerances, out: &mut Samples) -> Result<()> {
    let pt = StiefelPoint::new(s.orthonormal(m, p), s.factor(n, p))?;
    let shifted = pt.gram_n() + Mat::identity(p, p);

    let raw = ambient(s, m, n, p);
    let a = stiefel::tangent_project_total(&pt, &raw)?;
    let proj = stiefel::horizontal_project(&pt, &a)?;
    let h = proj.lift.pair().clone();
    let v = a.pair() - &h;
    let vert = stiefel::vertical_vector(&pt, &(-&proj.omega))?;
    out.push("stiefel.split.horizontal", stiefel::relative_horizontality(&pt, &h));
    out.push("stiefel.split.vertical", relative((&v - vert.pair()).norm(), a.euclidean_norm()));
    out.push("stiefel.split.orthogonal", relative(h.dot(&v).abs(), h.norm() * v.norm()));
    let c = pt.m().transpose() * a.xm() + pt.n().transpose() * a.xn();
    let rhs = c.transpose() - &c;
    out.push(
        "stiefel.sylvester.projection",
        sylvester_residual(&shifted, &shifted, &proj.omega, &rhs),
    );

    let z = s.tangent_at(pt.m(), pt.n());
    let lift = stiefel::horizontal_lift(&pt, &z)?;
    let back = stiefel::dpi(&pt, &lift.lift)?;
    out.push("stiefel.lift.roundtrip", relative((&back - &z).norm(), z.norm()));
    out.push("stiefel.lift.horizontal", stiefel::relative_horizontality(&pt, lift.lift.pair()));
    let mtzn = pt.m().transpose() * &z * pt.n();
    let rhs = &mtzn - mtzn.transpose();
    out.push(
        "stiefel.sylvester.lift",
        sylvester_residual(&shifted, &shifted, &lift.omega, &rhs),
    );
    out.push(
        "stiefel.sylvester.skew",
        relative((&lift.omega + lift.omega.transpose()).norm(), lift.omega.norm()),
    );
    let again = stiefel::horizontal_lift(&pt, &stiefel::dpi(&pt, &proj.lift)?)?;
    out.push("stiefel.lift.uniqueness", relative((again.lift.pair() - &h).norm(), h.norm()));

    let d = pt.horizontal_dim();
    let mut images = Vec::with_capacity(d + p * p);
    for _ in 0..d + p * p {
        let t = stiefel::tangent_project_total(&pt, &ambient(s, m, n, p))?;
        let hz = stiefel::horizontal_project(&pt, &t)?.lift;
        images.push(stiefel::dpi(&pt, &hz)?);
    }
    out.push("stiefel.dimension", (image_rank(&images) as f64 - d as f64).abs());

    let rot = GaugeRotation::new(s.rotation(p))?;
    let pt2 = stiefel::transport_point(&pt, &rot)?;
    let z2 = s.tangent_at(pt.m(), pt.n());
    let x1 = lift.lift.clone();
    let x2 = stiefel::horizontal_lift(&pt, &z2)?.lift;
    let y1 = stiefel::horizontal_lift(&pt2, &z)?.lift;
    let y2 = stiefel::horizontal_lift(&pt2, &z2)?.lift;
    let before = stiefel::metric_total(&pt, &x1, &x2)?;
    let after = stiefel::metric_total(&pt2, &y1, &y2)?;
    out.push(
        "stiefel.metric.invariance",
        relative((before - after).abs(), x1.euclidean_norm() * x2.euclidean_norm()),
    );
    let moved = stiefel::fiber_transport(&pt, &x1, &rot, &pt2)?;
    out.push(
        "stiefel.transport",
        relative(moved.sub(&y1).euclidean_norm(), y1.euclidean_norm()),
    );

    // Connection axioms with fields P(Y₀) whose brackets do not vanish.
    let fx = ProjectedConstantField(unit_ambient(s, m, n, p));
    let fy = ProjectedConstantField(unit_ambient(s, m, n, p));
    let fz = ProjectedConstantField(unit_ambient(s, m, n, p));
    let (pm, pn) = (pt.m(), pt.n());
    let xv = fx.value(pm, pn)?;
    let yv = fy.value(pm, pn)?;
    let zv = fz.value(pm, pn)?;
    let inner_along = |dir: &FactorPair, f1: &ProjectedConstantField, f2: &ProjectedConstantField| {
        central(
            |t| {
                let q = stiefel::exp_total_pair(pm, pn, &dir.scale(t))?;
                Ok(f1.value(&q.m, &q.n)?.dot(&f2.value(&q.m, &q.n)?))
            },
            tol.fd_step,
        )
    };
    let nabla = |dir: &FactorPair, f: &ProjectedConstantField| -> Result<FactorPair> {
        let xl = LiftPair::ambient(&pt, dir.m.clone(), dir.n.clone())?;
        Ok(stiefel::connection_total(&pt, &xl, f)?.into_pair())
    };
    let bracket = |f1: &ProjectedConstantField, v1: &FactorPair, f2: &ProjectedConstantField, v2: &FactorPair| {
        Ok::<_, fixrank::Error>(&f2.derivative(pm, pn, v1)? - &f1.derivative(pm, pn, v2)?)
    };
    let nxy = nabla(&xv, &fy)?;
    let nxz = nabla(&xv, &fz)?;
    let dxyz = inner_along(&xv, &fy, &fz)?;
    out.push(
        "stiefel.connection.metric_compatibility",
        (dxyz - nxy.dot(&zv) - yv.dot(&nxz)).abs(),
    );
    let dyxz = inner_along(&yv, &fx, &fz)?;
    let dzxy = inner_along(&zv, &fx, &fy)?;
    let bxy = bracket(&fx, &xv, &fy, &yv)?;
    let bxz = bracket(&fx, &xv, &fz, &zv)?;
    let byz = bracket(&fy, &yv, &fz, &zv)?;
    let koszul = dxyz + dyxz - dzxy + bxy.dot(&zv) - bxz.dot(&yv) - byz.dot(&xv);
    out.push("stiefel.connection.koszul", (2.0 * nxy.dot(&zv) - koszul).abs());
    let nyx = nabla(&yv, &fx)?;
    let torsion = &(&nxy - &nyx) - &bxy;
    out.push(
        "stiefel.connection.torsion",
        relative(torsion.norm(), nxy.norm() + nyx.norm()),
    );
    let sym = pt.m().transpose() * &nxy.m;
    out.push(
        "stiefel.connection.tangency",
        relative((&sym + sym.transpose()).norm() * 0.5, nxy.norm()),
    );

    let target = s.gaussian(m, n);
    let obj = ApproximationObjective::new(target)?;
    let field = fixrank::objectives::gradient_field_stiefel(&obj);
    let c1 = stiefel::connection_quotient(&pt, &x1, &field)?;
    let c2 = stiefel::connection_quotient(&pt2, &y1, &field)?;
    let expect = c1.pair().right_mul(rot.matrix(), rot.matrix());
    out.push(
        "stiefel.connection.covariance",
        relative((c2.pair() - &expect).norm(), expect.norm()),
    );
    Ok(())
}

fn geodesic_trial(s: &mut Sampler, m: usize, n: usize, p: usize, tol: &Tolerances, out: &mut Samples) -> Result<()> {
    let pt = StiefelPoint::new(s.orthonormal(m, p), s.factor(n, p))?;
    let z = s.tangent_at(pt.m(), pt.n());
    let h = stiefel::horizontal_lift(&pt, &z)?.lift;
    let h = h.scale(1.0 / h.euclidean_norm());
    let hn = h.euclidean_norm();
    let curve = |t: f64| stiefel::exp_total_pair(pt.m(), pt.n(), &h.pair().scale(t));

    let at0 = stiefel::exp_total(&pt, &h.scale(0.0))?;
    out.push(
        "stiefel.exp.fixed_point",
        (&at0.m - pt.m()).norm() + (&at0.n - pt.n()).norm(),
    );

    let dt = tol.geodesic_step;
    let vel0 = (&curve(dt)? - &curve(-dt)?).scale(0.5 / dt);
    out.push("stiefel.exp.initial_velocity", relative((&vel0 - h.pair()).norm(), hn));

    let mut orth: f64 = 0.0;
    let mut second: f64 = 0.0;
    let mut horiz: f64 = 0.0;
    for &t in &[0.25, 0.5, 1.0, 2.0] {
        let g = curve(t)?;
        orth = orth.max(stiefel::orthonormality_drift(&g.m));
        let gp = curve(t + dt)?;
        let gm = curve(t - dt)?;
        let acc = (&(&gp - &g) - &(&g - &gm)).scale(1.0 / (dt * dt));
        let q = StiefelPoint::with_orth_tol(g.m.clone(), g.n.clone(), 1e-9)?;
        let tangential = stiefel::tangent_project_total(&q, &acc)?;
        second = second.max(tangential.euclidean_norm() / (hn * hn));
        let vel = (&gp - &gm).scale(0.5 / dt);
        horiz = horiz.max(stiefel::relative_horizontality(&q, &vel));
    }
    out.push("stiefel.exp.orthonormality", orth);
    out.push("stiefel.exp.second_difference", second);
    out.push("stiefel.exp.horizontal_velocity", horiz);

    // Rank-one case: a great circle on the unit sphere of R^m.
    let basis = s.orthonormal(m.max(2), 2);
    let theta = s.uniform_in(0.1, 3.0);
    let e = basis.columns(0, 1).into_owned();
    let u = basis.columns(1, 1).into_owned();
    let ring = StiefelPoint::new(e.clone(), Mat::from_element(1, 1, 1.0))?;
    let dir = LiftPair::ambient(&ring, &u * theta, Mat::zeros(1, 1))?;
    let got = stiefel::exp_total(&ring, &dir)?;
    let expected = e * theta.cos() + u * theta.sin();
    out.push("stiefel.exp.great_circle", (got.m - expected).norm());
    Ok(())
}

/// Groups results by their geometry prefix.
pub fn by_geometry(report: &VerifyReport) -> BTreeMap<&str, Vec<&PropertyResult>> {
    let mut map: BTreeMap<&str, Vec<&PropertyResult>> = BTreeMap::new();
    for r in &report.results {
        let key = r.name.split('.').next().unwrap_or("");
        map.entry(key).or_default().push(r);
    }
    map
}
