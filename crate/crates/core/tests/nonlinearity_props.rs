use extinction_core::nonlinearity::*;
use proptest::prelude::*;

fn signed_magnitude() -> impl Strategy<Value = f64> {
    (-6.0f64..2.0, any::<bool>()).prop_map(|(e, neg)| if neg { -(10f64.powf(e)) } else { 10f64.powf(e) })
}

fn setup() -> impl Strategy<Value = (DiffusionLaw, RegularizationParams)> {
    (0.1f64..10.0, 0.05f64..0.95, -4.0f64..0.0).prop_map(|(rho, alpha, le)| {
        (
            DiffusionLaw::new(rho, alpha).unwrap(),
            RegularizationParams::new(10f64.powf(le)).unwrap(),
        )
    })
}

/// Plain bisection for `y + λΨ₀(y) = r`.
fn bisect(r: f64, law: &DiffusionLaw, lambda: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, r.abs());
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid + lambda * psi0(mid, law) < r.abs() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).copysign(r)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn resolvent_matches_bisection((law, reg) in setup(), r in signed_magnitude()) {
        let y = resolvent(r, &law, &reg).unwrap();
        prop_assert!((y - bisect(r, &law, reg.lambda)).abs() <= 1e-10 * r.abs().max(1.0));
    }

    #[test]
    fn resolvent_is_a_contraction((law, reg) in setup(), a in signed_magnitude(), b in signed_magnitude()) {
        let (ya, yb) = (resolvent(a, &law, &reg).unwrap(), resolvent(b, &law, &reg).unwrap());
        prop_assert!((ya - yb).abs() <= (a - b).abs() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn yosida_is_monotone_and_lipschitz((law, reg) in setup(), a in signed_magnitude(), b in signed_magnitude()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pl, ph) = (yosida(lo, &law, &reg).unwrap(), yosida(hi, &law, &reg).unwrap());
        prop_assert!(pl <= ph);
        prop_assert!(ph - pl <= (hi - lo) / reg.lambda * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn both_formulas_agree((law, reg) in setup(), r in signed_magnitude()) {
        let direct = yosida(r, &law, &reg).unwrap();
        let quotient = yosida_difference_quotient(r, &law, &reg).unwrap();
        prop_assert!((direct - quotient).abs() <= 1e-8 * direct.abs().max(f64::MIN_POSITIVE), "{direct} vs {quotient}");
    }

    #[test]
    fn yosida_is_dominated_by_psi0((law, reg) in setup(), r in signed_magnitude()) {
        let p = yosida(r, &law, &reg).unwrap();
        prop_assert!(p.abs() <= psi0(r, &law).abs());
        prop_assert_eq!(p.signum(), r.signum());
    }

    #[test]
    fn yosida_converges_as_lambda_halves(rho in 0.1f64..10.0, alpha in 0.05f64..0.95, r in signed_magnitude()) {
        prop_assume!(r.abs() >= 1e-3);
        let law = DiffusionLaw::new(rho, alpha).unwrap();
        let target = psi0(r, &law);
        let mut prev = f64::INFINITY;
        for j in 1..=20 {
            let reg = RegularizationParams::new(0.5f64.powi(j)).unwrap();
            let err = (yosida(r, &law, &reg).unwrap() - target).abs();
            prop_assert!(err <= prev);
            prev = err;
        }
        prop_assert!(prev <= 1e-2 * target.abs());
    }
}
