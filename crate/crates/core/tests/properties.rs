use nalgebra::DMatrix;
use proptest::prelude::*;
use rmpower_core::distributions::*;
use rmpower_core::power::*;
use rmpower_core::rmanova::*;

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(256)
}

fn df() -> impl Strategy<Value = f64> {
    prop_oneof![0.5f64..5.0, 5.0f64..60.0, 60.0f64..800.0]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn cdfs_monotone_bounded(d1 in df(), d2 in df(), lambda in 0.0f64..60.0, x1 in 0.0f64..20.0, dx in 0.0f64..5.0) {
        let p = DistParams::new(d1, d2, lambda).unwrap();
        let a = noncentral_f_cdf(x1, &p).unwrap();
        let b = noncentral_f_cdf(x1 + dx, &p).unwrap();
        prop_assert!(a.is_finite() && b.is_finite());
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b >= a - 1e-14);

        let c = DistParams::central(d1, d2).unwrap();
        prop_assert!(f_cdf(x1 + dx, &c).unwrap() >= f_cdf(x1, &c).unwrap() - 1e-15);
        prop_assert!(chisq_cdf(x1 + dx, d1).unwrap() >= chisq_cdf(x1, d1).unwrap() - 1e-15);
    }

    #[test]
    fn noncentral_decreasing_in_lambda(d1 in df(), d2 in df(), l1 in 0.0f64..50.0, dl in 0.0f64..20.0, x in 0.01f64..10.0) {
        let a = noncentral_f_cdf(x, &DistParams::new(d1, d2, l1).unwrap()).unwrap();
        let b = noncentral_f_cdf(x, &DistParams::new(d1, d2, l1 + dl).unwrap()).unwrap();
        prop_assert!(b <= a + 1e-12);
    }

    #[test]
    fn quantile_roundtrip(d1 in df(), d2 in df(), q in 0.001f64..0.999) {
        let p = DistParams::central(d1, d2).unwrap();
        let x = f_quantile(q, &p).unwrap();
        prop_assert!((f_cdf(x, &p).unwrap() - q).abs() <= 1e-9);
        // x itself is ill-conditioned where the cdf is flat; compare in probability.
        let x2 = f_quantile(f_cdf(x, &p).unwrap(), &p).unwrap();
        prop_assert!((f_cdf(x2, &p).unwrap() - q).abs() <= 1e-9);
    }

    #[test]
    fn incomplete_beta_monotone(a in 0.1f64..200.0, b in 0.1f64..200.0, x in 0.0f64..1.0, dx in 0.0f64..0.2) {
        let lo = reg_inc_beta(x, a, b).unwrap();
        let hi = reg_inc_beta((x + dx).min(1.0), a, b).unwrap();
        prop_assert!(hi >= lo - 1e-14);
    }
}

fn kind() -> impl Strategy<Value = TestKind> {
    prop_oneof![Just(TestKind::Between), Just(TestKind::Within), Just(TestKind::Interaction)]
}

fn power_of(kind: TestKind, g: usize, t: usize, n: usize, eff: EffectSpec) -> f64 {
    compute_power(kind, &StudyDesign::new(g, t, n).unwrap(), &eff).unwrap().power
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn power_monotone_in_n_and_f(k in kind(), g in 2usize..6, t in 2usize..7, per in 2usize..30, f in 0.0f64..0.8, df_ in 0.0f64..0.3, rho in 0.0f64..0.9) {
        let n = g * per;
        let eff = EffectSpec { f, rho, ..Default::default() };
        let base = power_of(k, g, t, n, eff);
        prop_assert!(power_of(k, g, t, n + g, eff) >= base - 1e-12);
        prop_assert!(power_of(k, g, t, n, eff.with_f(f + df_)) >= base - 1e-12);
        prop_assert!(base >= eff.alpha - 1e-9 && base <= 1.0);
    }

    #[test]
    fn power_monotone_in_alpha(k in kind(), g in 2usize..5, t in 2usize..6, per in 2usize..20, f in 0.0f64..0.6, a1 in 0.001f64..0.2, da in 0.0f64..0.2) {
        let e1 = EffectSpec { f, alpha: a1, ..Default::default() };
        let e2 = EffectSpec { alpha: a1 + da, ..e1 };
        prop_assert!(power_of(k, g, t, g * per, e2) >= power_of(k, g, t, g * per, e1) - 1e-12);
    }

    #[test]
    fn power_direction_in_rho(k in kind(), g in 2usize..5, t in 3usize..6, per in 2usize..20, f in 0.05f64..0.6, r1 in 0.0f64..0.8, dr in 0.0f64..0.15) {
        let e1 = EffectSpec { f, rho: r1, ..Default::default() };
        let e2 = EffectSpec { rho: r1 + dr, ..e1 };
        let (p1, p2) = (power_of(k, g, t, g * per, e1), power_of(k, g, t, g * per, e2));
        match k {
            TestKind::Between => prop_assert!(p2 <= p1 + 1e-12),
            _ => prop_assert!(p2 >= p1 - 1e-12),
        }
    }

    #[test]
    fn null_power_is_alpha(k in kind(), g in 2usize..6, t in 2usize..7, per in 2usize..40, alpha in 0.001f64..0.3, rho in -0.2f64..0.9) {
        let eff = EffectSpec { f: 0.0, alpha, rho: rho.max(-0.9 / (t as f64 - 1.0)), ..Default::default() };
        prop_assert!((power_of(k, g, t, g * per, eff) - alpha).abs() <= 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mde_decreases_when_n_doubles(k in kind(), g in 2usize..5, t in 2usize..6, per in 2usize..15) {
        let eff = EffectSpec::default();
        let d1 = StudyDesign::new(g, t, g * per).unwrap();
        let d2 = StudyDesign::new(g, t, 2 * g * per).unwrap();
        let f1 = minimal_detectable_effect(k, &d1, &eff).unwrap();
        let f2 = minimal_detectable_effect(k, &d2, &eff).unwrap();
        prop_assert!(f2 < f1);
        let back = compute_power(k, &d1, &eff.with_f(f1)).unwrap().power;
        prop_assert!((back - 0.8).abs() <= 1e-8);
    }

    #[test]
    fn curves_do_not_cross(k in kind(), g in 2usize..5, t in 2usize..6) {
        let fs = [0.1, 0.25, 0.4];
        let ns: Vec<usize> = (2..30).map(|m| m * g).collect();
        let c = power_curve(k, g, t, &EffectSpec::default(), &fs, &ns).unwrap();
        prop_assert!(c.skipped.is_empty());
        for f in fs {
            let s: Vec<f64> = c.series(f).map(|r| r.power).collect();
            prop_assert!(s.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
        for (lo, hi) in [(0.1, 0.25), (0.25, 0.4)] {
            for (a, b) in c.series(lo).zip(c.series(hi)) {
                prop_assert!(b.power >= a.power - 1e-12);
            }
        }
    }
}

fn dataset() -> impl Strategy<Value = Vec<Vec<Vec<f64>>>> {
    (1usize..4, 2usize..6, 2usize..7).prop_flat_map(|(g, t, max_n)| {
        prop::collection::vec(
            (2usize..=max_n.max(2)).prop_flat_map(move |n| {
                prop::collection::vec(prop::collection::vec(-10.0f64..10.0, t), n)
            }),
            g,
        )
    })
}

fn tested_fs(t: &AnovaTable) -> Vec<f64> {
    t.rows.iter().filter_map(|r| r.f).collect()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn ss_additive(groups in dataset()) {
        let d = RMDataset::from_rows(groups).unwrap();
        let t = rm_anova(&d).unwrap();
        let total = t.row(Source::Total).unwrap().ss;
        prop_assert!((t.component_ss() - total).abs() <= 1e-8 * total.max(1e-300));
    }

    #[test]
    fn f_shift_scale_invariant(groups in dataset(), shift in -100.0f64..100.0, scale in 0.01f64..100.0) {
        let d = RMDataset::from_rows(groups.clone()).unwrap();
        let moved: Vec<Vec<Vec<f64>>> = groups
            .iter()
            .map(|g| g.iter().map(|r| r.iter().map(|y| y * scale + shift).collect()).collect())
            .collect();
        let d2 = RMDataset::from_rows(moved).unwrap();
        let (a, b) = (tested_fs(&rm_anova(&d).unwrap()), tested_fs(&rm_anova(&d2).unwrap()));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-7 * x.abs().max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn subject_order_irrelevant(groups in dataset()) {
        let d = RMDataset::from_rows(groups.clone()).unwrap();
        let rev: Vec<Vec<Vec<f64>>> = groups.into_iter().map(|mut g| { g.reverse(); g }).collect();
        let d2 = RMDataset::from_rows(rev).unwrap();
        let (a, b) = (rm_anova(&d).unwrap(), rm_anova(&d2).unwrap());
        for (x, y) in a.rows.iter().zip(&b.rows) {
            prop_assert!((x.ss - y.ss).abs() <= 1e-10 * x.ss.max(1.0));
        }
    }

    #[test]
    fn epsilon_bounds(t in 3usize..7, seed in prop::collection::vec(-3.0f64..3.0, 49), n in 10usize..60, g in 1usize..4) {
        // Random positive-definite covariance A A^T + 0.1 I.
        let a = DMatrix::from_fn(t, t, |i, j| seed[i * 7 + j]);
        let cov = &a * a.transpose() + DMatrix::identity(t, t) * 0.1;
        let r = SphericityReport::from_covariance(&cov, n, g).unwrap();
        let lower = 1.0 / (t as f64 - 1.0);
        prop_assert!(r.eps_gg >= lower - 1e-12 && r.eps_gg <= 1.0 + 1e-12);
        prop_assert!(r.eps_hf_uncapped >= r.eps_gg - 1e-12);
        prop_assert!(r.eps_hf <= 1.0 && r.eps_hf >= r.eps_gg - 1e-12);
        prop_assert!(r.mauchly_w > 0.0 && r.mauchly_w <= 1.0);
    }

    #[test]
    fn adjusted_p_not_smaller(groups in dataset(), frac in 0.0f64..1.0) {
        let d = RMDataset::from_rows(groups).unwrap();
        let t = rm_anova(&d).unwrap();
        let lower = 1.0 / (t.times as f64 - 1.0);
        let eps = lower + frac * (1.0 - lower);
        let adj = adjusted_pvalues(&t, eps, Correction::Manual).unwrap();
        // Shrinking dfs fattens the upper tail only beyond F of roughly 1.3;
        // below that the adjusted p can drop. Inside the valid epsilon range
        // the crossover sits above p = 0.21.
        for a in &adj.adjusted {
            let raw = t.row(a.source).unwrap().p.unwrap();
            if raw <= 0.2 {
                prop_assert!(a.p >= raw - 1e-12, "eps={eps} raw={raw} adj={}", a.p);
            }
        }
    }
}

#[test]
fn adjusted_p_can_fall_for_small_f() {
    // F = 1 with (2, 60) dfs at eps = 0.5: the unadjusted tail is wider.
    let raw = f_sf(1.0, &DistParams::central(2.0, 60.0).unwrap()).unwrap();
    let adj = f_sf(1.0, &DistParams::central(1.0, 30.0).unwrap()).unwrap();
    assert!(adj < raw);
    // In the rejection region the correction is conservative.
    let raw = f_sf(4.0, &DistParams::central(2.0, 60.0).unwrap()).unwrap();
    let adj = f_sf(4.0, &DistParams::central(1.0, 30.0).unwrap()).unwrap();
    assert!(adj > raw);
}
