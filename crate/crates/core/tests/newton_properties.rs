use fixrank::newton::{newton_operator, riemannian_gradient_step, ArmijoParams};
use fixrank::random::Sampler;
use fixrank::{
    newton_run, newton_step, ApproximationObjective, Balanced, BalancedPoint, CompletionObjective, EuclideanOracle,
    FactorPair, FactorPoint, Geometry, LiftPair, Mat, NewtonConfig, Observation, Status, Stiefel, StiefelPoint,
};

fn scalar(v: f64) -> Mat {
    Mat::from_element(1, 1, v)
}

fn random_horizontal<G: Geometry>(g: G, pt: &G::Point, s: &mut Sampler) -> LiftPair {
    let (m, n, p) = (pt.m().nrows(), pt.n().nrows(), pt.rank());
    let raw = FactorPair::new(s.gaussian(m, p), s.gaussian(n, p));
    g.project_ambient(pt, &raw).unwrap()
}

#[test]
fn scalar_balanced_step_matches_closed_form() {
    // With ṁ/m = ṅ/n = u the quotient metric is dx²/(2x²); Newton in the flat
    // coordinate ln(x)/√2 gives u = −(x − a)/(2(2x − a)), and the retraction
    // lands on x·(1 + u)². The Hessian 2x(2x − a) must not vanish.
    for &(m0, n0, a) in &[(1.0f64, 1.0, 1.5), (0.5, 3.0, 1.0), (2.0, 0.25, 0.3), (-1.0, 2.0, -3.0)] {
        let x = m0 * n0;
        let expect = x * ((3.0 * x - a) / (2.0 * (2.0 * x - a))).powi(2);
        let pt = BalancedPoint::new(scalar(m0), scalar(n0)).unwrap();
        let o = ApproximationObjective::new(scalar(a)).unwrap();
        let (next, _) = newton_step(Balanced, &pt, &o, &NewtonConfig::default()).unwrap();
        let got = next.product()[(0, 0)];
        assert!((got - expect).abs() <= 1e-12 * expect.abs(), "x={x} a={a}: {got} vs {expect}");
    }
}

#[test]
fn scalar_stiefel_step_lands_on_target() {
    for &(sign, n0, a) in &[(1.0, 1.0, 2.0), (-1.0, 0.5, 4.0), (1.0, -2.0, 0.1)] {
        let pt = StiefelPoint::new(scalar(sign), scalar(n0)).unwrap();
        let o = ApproximationObjective::new(scalar(a)).unwrap();
        let (next, _) = newton_step(Stiefel, &pt, &o, &NewtonConfig::default()).unwrap();
        assert!((next.product()[(0, 0)] - a).abs() <= 1e-13 * a.abs());
    }
}

fn self_adjointness<G: Geometry>(g: G, pt: &G::Point, oracle: &dyn EuclideanOracle, s: &mut Sampler) -> f64 {
    let op = newton_operator(g, pt, oracle).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let a = random_horizontal(g, pt, s);
        let b = random_horizontal(g, pt, s);
        let la = op.apply(&a).unwrap();
        let lb = op.apply(&b).unwrap();
        let lhs = op.inner(&la, &b);
        let rhs = op.inner(&a, &lb);
        let scale = g.norm(pt, la.pair()) * g.norm(pt, b.pair()) + g.norm(pt, a.pair()) * g.norm(pt, lb.pair());
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

#[test]
fn newton_operator_is_self_adjoint() {
    let mut s = Sampler::new(11);
    for &(m, n, p) in &[(7, 5, 2), (12, 9, 3), (6, 6, 6)] {
        let a = s.gaussian(m, n);
        let approx = ApproximationObjective::new(a.clone()).unwrap();
        let mut obs = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if s.uniform() < 0.6 {
                    obs.push(Observation { row: i, col: j, value: a[(i, j)] });
                }
            }
        }
        let completion = CompletionObjective::new(m, n, obs).unwrap();
        let (mm, nn) = (s.factor(m, p), s.factor(n, p));
        let bp = Balanced.from_factors(&mm, &nn).unwrap();
        let sp = Stiefel.from_factors(&mm, &nn).unwrap();
        for oracle in [&approx as &dyn EuclideanOracle, &completion] {
            assert!(self_adjointness(Balanced, &bp, oracle, &mut s) <= 1e-8);
            assert!(self_adjointness(Stiefel, &sp, oracle, &mut s) <= 1e-8);
        }
    }
}

/// At a critical point `⟨L ξ, ξ⟩ = d²/dt² f(step(tξ))` at `t = 0`, for any
/// second-order-agnostic curve through the point with velocity `ξ`.
fn hessian_by_differences<G: Geometry>(g: G, pt: &G::Point, oracle: &dyn EuclideanOracle, s: &mut Sampler) -> f64 {
    let op = newton_operator(g, pt, oracle).unwrap();
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let xi = random_horizontal(g, pt, s);
        let xi = xi.scale(1.0 / g.norm(pt, xi.pair()));
        let f = |t: f64| {
            let q = g.step(pt, &xi, t).unwrap();
            oracle.value(q.m(), q.n()).unwrap()
        };
        let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        let exact = op.inner(&op.apply(&xi).unwrap(), &xi);
        worst = worst.max((fd - exact).abs() / exact.abs().max(1.0));
    }
    worst
}

#[test]
fn hessian_matches_second_differences_at_a_critical_point() {
    let mut s = Sampler::new(12);
    for &(m, n, p) in &[(7, 5, 2), (10, 8, 3)] {
        let a = s.gaussian(m, n);
        let o = ApproximationObjective::new(a.clone()).unwrap();
        let svd = a.svd(true, true);
        let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
        idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let mm = Mat::from_fn(m, p, |r, c| u[(r, idx[c])] * svd.singular_values[idx[c]].sqrt());
        let nn = Mat::from_fn(n, p, |r, c| vt[(idx[c], r)] * svd.singular_values[idx[c]].sqrt());
        let bp = Balanced.from_factors(&mm, &nn).unwrap();
        let sp = Stiefel.from_factors(&mm, &nn).unwrap();
        assert!(hessian_by_differences(Balanced, &bp, &o, &mut s) <= 1e-4);
        assert!(hessian_by_differences(Stiefel, &sp, &o, &mut s) <= 1e-4);
    }
}

#[test]
fn gradient_steps_decrease_the_objective() {
    let mut s = Sampler::new(13);
    let o = ApproximationObjective::new(s.gaussian(9, 7)).unwrap();
    let (mm, nn) = (s.factor(9, 2), s.factor(7, 2));
    for _ in 0..2 {
        let mut bp = Balanced.from_factors(&mm, &nn).unwrap();
        let mut sp = Stiefel.from_factors(&mm, &nn).unwrap();
        for _ in 0..20 {
            let f0 = o.value(bp.m(), bp.n()).unwrap();
            let step = riemannian_gradient_step(Balanced, &bp, &o, &ArmijoParams::default()).unwrap();
            assert!(step.step > 0.0 && step.f_value < f0);
            bp = step.point;
            let f0 = o.value(sp.m(), sp.n()).unwrap();
            let step = riemannian_gradient_step(Stiefel, &sp, &o, &ArmijoParams::default()).unwrap();
            assert!(step.step > 0.0 && step.f_value < f0);
            sp = step.point;
        }
    }
}

#[test]
fn records_cover_every_iteration() {
    let mut s = Sampler::new(14);
    let a = s.gaussian(8, 6);
    let o = ApproximationObjective::new(a).unwrap();
    let cfg = NewtonConfig {
        max_outer: 2,
        ..Default::default()
    };
    let start = Balanced.from_factors(&s.factor(8, 2), &s.factor(6, 2)).unwrap();
    let res = newton_run(Balanced, &start, &o, &cfg).unwrap();
    assert_eq!(res.status, Status::MaxIter);
    assert_eq!(res.records.len(), res.outer_iterations() + 1);
    assert_eq!(res.records.len(), 3);
    for (k, r) in res.records.iter().enumerate() {
        assert_eq!(r.index, k);
    }
    assert_eq!(res.records[0].krylov_iterations, 0);
}

#[test]
fn warm_start_is_recorded_separately() {
    let mut s = Sampler::new(15);
    let o = ApproximationObjective::new(s.gaussian(8, 6)).unwrap();
    let cfg = NewtonConfig {
        warmstart_steps: 3,
        ..Default::default()
    };
    let start = Stiefel.from_factors(&s.factor(8, 2), &s.factor(6, 2)).unwrap();
    let res = newton_run(Stiefel, &start, &o, &cfg).unwrap();
    assert_eq!(res.warmstart.len(), 4);
    assert!(res.warmstart.windows(2).all(|w| w[1].f_value <= w[0].f_value));
    assert_eq!(res.records[0].f_value, res.warmstart[3].f_value);
}
