mod common;

use fixmpc::admm::{admm_solve, project_cone};
use fixmpc::fgm::{fgm_solve, project_box, FgmFormats, FgmFx};
use fixmpc::fxp::{fx_add, fx_mul_trunc, quantize, FxFormat, OverflowPolicy, Rounding};
use fixmpc::linalg::Mat;
use fixmpc::model::{MpcProblem, Reference};
use fixmpc::transform::{
    build_sparse, condense, normalize_fgm, normalize_fgm_exact, precompute_admm, scale_soft_constraints, solve_mpc,
    OracleMode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{max_abs_diff, random_problem, random_state};

fn fmt() -> impl Strategy<Value = FxFormat> {
    (2u32..12, 4u32..30).prop_map(|(i, b)| FxFormat::new(i, b).unwrap())
}

fn in_range(f: FxFormat) -> impl Strategy<Value = f64> {
    f.min_value()..f.max_value()
}

proptest! {
    #[test]
    fn truncation_error_is_below_one_lsb((f, x) in fmt().prop_flat_map(|f| (Just(f), in_range(f)))) {
        let q = quantize(x, f, Rounding::Truncate).unwrap().to_f64();
        prop_assert!(q <= x && x - q < f.lsb());
        let n = quantize(x, f, Rounding::Nearest).unwrap().to_f64();
        prop_assert!((n - x).abs() <= f.lsb() / 2.0);
    }

    #[test]
    fn checked_add_is_exact_or_errors((f, a, b) in fmt().prop_flat_map(|f| (Just(f), in_range(f), in_range(f)))) {
        let (qa, qb) = (quantize(a, f, Rounding::Truncate).unwrap(), quantize(b, f, Rounding::Truncate).unwrap());
        let exact = qa.to_f64() + qb.to_f64();
        match fx_add(qa, qb, OverflowPolicy::Checked) {
            Ok(s) => prop_assert_eq!(s.to_f64(), exact),
            Err(_) => prop_assert!(exact < f.min_value() || exact > f.max_value()),
        }
        let sat = fx_add(qa, qb, OverflowPolicy::Saturate).unwrap().to_f64();
        prop_assert_eq!(sat, exact.clamp(f.min_value(), f.max_value()));
        let wrap = fx_add(qa, qb, OverflowPolicy::Wrap).unwrap().to_f64();
        let span = 2.0 * (f.max_value() + f.lsb());
        prop_assert_eq!((wrap - exact).rem_euclid(span), 0.0);
    }

    #[test]
    fn product_truncates_downward((f, a, b) in fmt().prop_flat_map(|f| (Just(f), in_range(f), in_range(f)))) {
        let (qa, qb) = (quantize(a, f, Rounding::Truncate).unwrap(), quantize(b, f, Rounding::Truncate).unwrap());
        let exact = qa.to_f64() * qb.to_f64();
        if let Ok(p) = fx_mul_trunc(qa, qb) {
            let p = p.to_f64();
            prop_assert!(p <= exact && exact - p < f.lsb());
        }
    }

    #[test]
    fn cone_projection_is_nonexpansive(
        a in (-4.0..4.0f64, -4.0..4.0f64),
        b in (-4.0..4.0f64, -4.0..4.0f64),
        c in -1.0..1.0f64,
        r in 0.0..2.0f64,
    ) {
        let (pa, pb) = (project_cone(a.0, a.1, c, r), project_cone(b.0, b.1, c, r));
        let d = |u: (f64, f64), v: (f64, f64)| ((u.0 - v.0).powi(2) + (u.1 - v.1).powi(2)).sqrt();
        prop_assert!(d(pa, pb) <= d(a, b) + 1e-12);
        prop_assert!(pa.1 >= 0.0 && (pa.0 - c).abs() <= r + pa.1 + 1e-12);
        prop_assert!(d(project_cone(pa.0, pa.1, c, r), pa) <= 1e-12);
    }

    #[test]
    fn box_projection_stays_inside(t in proptest::collection::vec(-5.0..5.0f64, 1..10), w in 0.0..3.0f64) {
        let lo = vec![-w; t.len()];
        let hi = vec![w; t.len()];
        let p = project_box(&t, &lo, &hi);
        prop_assert!(p.iter().all(|v| v.abs() <= w));
        prop_assert_eq!(project_box(&p, &lo, &hi), p);
    }
}

fn with_cross_weight(mut p: MpcProblem, rng: &mut ChaCha8Rng) -> MpcProblem {
    let (nx, nu) = (p.nx(), p.nu());
    p.weights.s = Mat::from_fn(nx, nu, |_, _| rng.gen_range(-0.05..0.05));
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn condensed_and_sparse_costs_agree(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = with_cross_weight(random_problem(&mut rng, false), &mut rng);
        let x = random_state(&mut rng, p.nx(), 2.0);
        let r = Reference { x: random_state(&mut rng, p.nx(), 0.5), u: random_state(&mut rng, p.nu(), 0.2) };
        let q = condense(&p).unwrap();
        let s = build_sparse(&p).unwrap();
        let lin = q.linear_term(&x, &r);
        let h = s.h(&r);
        let u1 = random_state(&mut rng, q.n(), 1.0);
        let u2 = random_state(&mut rng, q.n(), 1.0);
        // equal up to a constant in the decision variable
        let dc = q.objective(&u1, &lin) - q.objective(&u2, &lin);
        let ds = s.objective(&s.point_from_inputs(&p, &x, &u1), &h) - s.objective(&s.point_from_inputs(&p, &x, &u2), &h);
        prop_assert!((dc - ds).abs() <= 1e-9 * (1.0 + dc.abs()), "{} vs {}", dc, ds);
    }

    #[test]
    fn fgm_reaches_the_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = with_cross_weight(random_problem(&mut rng, false), &mut rng);
        let x = random_state(&mut rng, p.nx(), 3.0);
        let r = Reference::zero(p.nx(), p.nu());
        let q = condense(&p).unwrap();
        let off = normalize_fgm_exact(&q);
        let z = fgm_solve(&off, &q, &q.param(&x, &r), 300, None).unwrap().z;
        let u = solve_mpc(&p, &x, &r, OracleMode::Penalty).unwrap().u;
        prop_assert!(max_abs_diff(&z, &u) < 1e-6);
    }

    #[test]
    fn admm_reaches_the_oracle(seed in any::<u64>(), soft in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, soft);
        let x = random_state(&mut rng, p.nx(), 3.0);
        let r = Reference::zero(p.nx(), p.nu());
        let raw = build_sparse(&p).unwrap();
        let s = if soft { scale_soft_constraints(&raw, p.weights.sigma1).unwrap() } else { raw };
        let off = precompute_admm(&s, 16.0, 40).unwrap();
        let run = admm_solve(&off, &s, &x, &r, 50_000, None, None).unwrap();
        let z = s.unscale(&run.z)[..p.nu() * p.horizon].to_vec();
        let u = solve_mpc(&p, &x, &r, OracleMode::Penalty).unwrap().u;
        prop_assert!(max_abs_diff(&z, &u) < 1e-6);
    }

    #[test]
    fn wide_fixed_point_fgm_tracks_double(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_problem(&mut rng, false);
        let x = random_state(&mut rng, p.nx(), 1.0);
        let r = Reference::zero(p.nx(), p.nu());
        let q = condense(&p).unwrap();
        let off = normalize_fgm(&q, 28).unwrap();
        let fx = FgmFx::new(&off, &q, FgmFormats::uniform(FxFormat::new(16, 28).unwrap()), OverflowPolicy::Checked).unwrap();
        let a = fx.solve(&q.param(&x, &r), 30, None).unwrap().z;
        let b = fgm_solve(&off, &q, &q.param(&x, &r), 30, None).unwrap().z;
        prop_assert!(max_abs_diff(&a, &b) < 1e-5);
    }
}
